"""Conditionally Gaussian and conditionally Poisson noises on the grid.

Given an intensity path, cell ``i`` carries a Gaussian increment
``dB_i ~ N(0, lambda_B_i dt)`` and, for each mark ``z_j``, a Poisson count
``N_ij ~ Poisson(nu_j lambda_H_i dt)``; all draws are independent given the
intensities. Compensated counts are ``N_ij - nu_j lambda_H_i dt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .intensity import IntensityPath, TimeGrid
from .streams import PathStreams


@dataclass(frozen=True)
class JumpMeasureSpec:
    """Finite jump measure ``nu = sum_j weights_j delta_{marks_j}``."""

    marks: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        marks = tuple(float(z) for z in self.marks)
        weights = tuple(float(w) for w in self.weights)
        if len(marks) == 0:
            raise ValueError("jump measure needs at least one mark")
        if len(marks) != len(weights):
            raise ValueError("marks and weights must have the same length")
        if any(z == 0.0 for z in marks):
            raise ValueError("jump marks must be nonzero")
        if len(set(marks)) != len(marks):
            raise ValueError("jump marks must be distinct")
        if any(not w > 0 for w in weights):
            raise ValueError("jump weights must be positive")
        if not np.isfinite(sum(z * z * w for z, w in zip(marks, weights))):
            raise ValueError("jump measure must have a finite second moment")
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "weights", weights)

    @property
    def z(self) -> np.ndarray:
        return np.array(self.marks)

    @property
    def nu(self) -> np.ndarray:
        return np.array(self.weights)

    @property
    def n_marks(self) -> int:
        return len(self.marks)

    @property
    def total_mass(self) -> float:
        return float(sum(self.weights))

    def index_of(self, mark: float) -> int:
        try:
            return self.marks.index(float(mark))
        except ValueError:
            raise KeyError(f"unknown mark {mark}") from None

    def levy_exponent(self, c: float) -> complex:
        """``sum_j (exp(i c z_j) - 1 - i c z_j) nu_j``."""
        z, w = self.z, self.nu
        return complex(np.sum((np.exp(1j * c * z) - 1.0 - 1j * c * z) * w))


@dataclass(frozen=True)
class NoisePath:
    """One draw of ``(B, H)`` per path. ``dB``: (P, N); ``counts``: (P, N, J)."""

    intensity: IntensityPath
    nu: JumpMeasureSpec
    dB: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        p, n = self.intensity.n_paths, self.grid.n_steps
        if self.dB.shape != (p, n):
            raise ValueError(f"dB has shape {self.dB.shape}, expected {(p, n)}")
        if self.counts.shape != (p, n, self.nu.n_marks):
            raise ValueError("counts shape does not match intensity and marks")
        if np.any(self.counts < 0):
            raise ValueError("jump counts must be nonnegative")

    @property
    def grid(self) -> TimeGrid:
        return self.intensity.grid

    @property
    def n_paths(self) -> int:
        return self.dB.shape[0]

    @cached_property
    def jump_compensator(self) -> np.ndarray:
        """``nu_j lambda_H_i dt`` with shape (P, N, J)."""
        return self.intensity.cell_H[:, :, None] * self.nu.nu[None, None, :] * self.grid.dt

    @cached_property
    def compensated_jumps(self) -> np.ndarray:
        return self.counts - self.jump_compensator

    @cached_property
    def B(self) -> np.ndarray:
        """Running value ``B_{t_i}``, shape (P, N + 1)."""
        return _running(self.dB)

    @cached_property
    def eta(self) -> np.ndarray:
        """Running value of ``sum z H~``, shape (P, N + 1)."""
        return _running(self.compensated_jumps @ self.nu.z)


def _running(increments: np.ndarray) -> np.ndarray:
    out = np.zeros((increments.shape[0], increments.shape[1] + 1))
    np.cumsum(increments, axis=1, out=out[:, 1:])
    return out


def simulate_noise(intensity: IntensityPath, nu: JumpMeasureSpec, streams: PathStreams) -> NoisePath:
    if streams.n_paths != intensity.n_paths:
        raise ValueError("streams and intensity disagree on the number of paths")
    grid = intensity.grid
    dt = grid.dt
    gauss = streams.normal("gaussian", (grid.n_steps,))
    dB = gauss * np.sqrt(intensity.cell_B * dt)
    mean = intensity.cell_H[:, :, None] * nu.nu[None, None, :] * dt
    counts = streams.poisson("poisson", mean)
    return NoisePath(intensity, nu, dB, counts)


@dataclass(frozen=True)
class IntegrandField:
    """Predictable integrand: ``phi_B`` per cell, ``phi_H`` per cell and mark.

    Arrays broadcast against (P, N) and (P, N, J) respectively.
    """

    phi_B: np.ndarray
    phi_H: np.ndarray

    def scaled(self, factor: np.ndarray) -> "IntegrandField":
        """Multiply by a per-path factor (e.g. an intensity-path functional)."""
        f = np.asarray(factor, dtype=float)
        return IntegrandField(np.asarray(self.phi_B) * f[:, None], np.asarray(self.phi_H) * f[:, None, None])


def _check_integrand(path: NoisePath, phi: IntegrandField):
    p, n, j = path.counts.shape
    try:
        b = np.broadcast_to(phi.phi_B, (p, n))
        h = np.broadcast_to(phi.phi_H, (p, n, j))
    except ValueError:
        raise ValueError("integrand does not match the noise grid") from None
    return b, h


def ito_integral(path: NoisePath, phi: IntegrandField) -> np.ndarray:
    """``sum_i phi_B dB_i + sum_ij phi_H dH~_ij`` for every path."""
    b, h = _check_integrand(path, phi)
    return np.sum(b * path.dB, axis=1) + np.sum(h * path.compensated_jumps, axis=(1, 2))


def integrand_norm_sq(path: NoisePath, phi: IntegrandField) -> np.ndarray:
    """Per-path ``int phi_B^2 dLambda^B + int int phi_H^2 nu lambda_H dt``.

    Its mean over paths is the squared isometry norm.
    """
    b, h = _check_integrand(path, phi)
    dt = path.grid.dt
    return np.sum(b**2 * path.intensity.cell_B * dt, axis=1) + np.sum(h**2 * path.jump_compensator, axis=(1, 2))


def empirical_char_function(
    path: NoisePath, c: float, t_index: int, component: str = "B", return_se: bool = False
):
    """Sample average of ``exp(i c X_t)`` for ``X = B`` or ``X = eta``.

    With ``return_se`` the standard errors of the real and imaginary parts
    are returned as a second complex number ``se_re + 1j * se_im``.
    """
    if path.n_paths == 0:
        raise ValueError("empty sample")
    if component == "B":
        x = path.B[:, t_index]
    elif component == "eta":
        x = path.eta[:, t_index]
    else:
        raise ValueError(f"component must be 'B' or 'eta', got {component!r}")
    phase = np.exp(1j * c * x)
    est = complex(phase.mean())
    if not return_se:
        return est
    n = x.size
    se = complex(phase.real.std(ddof=1) / np.sqrt(n), phase.imag.std(ddof=1) / np.sqrt(n)) if n > 1 else 0j
    return est, se


def char_function_B(c: float, cum_B) -> np.ndarray:
    """Conditional characteristic function of ``B_t`` given ``Lambda``.

    Gaussian law: ``exp(-c^2 Lambda^B_t / 2)``. The positive exponent that
    is sometimes printed for this quantity is not a characteristic function.
    """
    return np.exp(-0.5 * c * c * np.asarray(cum_B))


def char_function_eta(c: float, cum_H, nu: JumpMeasureSpec) -> np.ndarray:
    return np.exp(nu.levy_exponent(c) * np.asarray(cum_H))


def quadratic_covariation(x, y, jump_products: Optional[np.ndarray] = None) -> np.ndarray:
    """Running sum of ``dx * dy`` (plus optional jump co-movements).

    Increments have the time axis last; the result has one more entry along
    that axis and starts at 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"increment shapes differ: {x.shape} vs {y.shape}")
    prod = x * y
    if jump_products is not None:
        jp = np.asarray(jump_products, dtype=float)
        if jp.shape != prod.shape:
            raise ValueError("jump_products must match the increment shape")
        prod = prod + jp
    out = np.zeros(prod.shape[:-1] + (prod.shape[-1] + 1,))
    np.cumsum(prod, axis=-1, out=out[..., 1:])
    return out


def noise_to_csv(path: NoisePath, fh, max_paths: Optional[int] = None) -> None:
    """Write one row per (path, cell): path, cell, t, lambda_B, lambda_H, dB, counts..."""
    p = path.n_paths if max_paths is None else min(max_paths, path.n_paths)
    n, j = path.grid.n_steps, path.nu.n_marks
    cols = ["path", "cell", "t", "lambda_B", "lambda_H", "dB"] + [f"count_{k}" for k in range(j)]
    fh.write(",".join(cols) + "\n")
    t = path.grid.nodes[:-1]
    lb, lh = path.intensity.cell_B, path.intensity.cell_H
    for a in range(p):
        for i in range(n):
            counts = ",".join(str(int(v)) for v in path.counts[a, i])
            fh.write(f"{a},{i},{t[i]!r},{lb[a, i]!r},{lh[a, i]!r},{path.dB[a, i]!r},{counts}\n")
