"""Bond, stock and wealth dynamics on the grid.

Coefficients are frozen at the left endpoint of every cell. The stock uses
the exact per-cell stochastic-exponential step so it stays positive; the
wealth uses an exponential integrator for the bond part (see
:func:`simulate_wealth`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .intensity import IntensityPath
from .noise import JumpMeasureSpec, NoisePath

Coefficient = Union[float, np.ndarray, Callable]


class AdmissibilityError(ValueError):
    """Raised when a coefficient, portfolio or scenario leaves the admissible set."""


@dataclass(frozen=True)
class MarketCoefficients:
    """Market parameters.

    Each of ``r``, ``alpha``, ``sigma`` is a scalar, an array broadcastable to
    ``(n_paths, N + 1)``, or a callable ``f(t_nodes, intensity) -> array``.
    ``gamma`` is the same but with a trailing mark axis of length J (a
    sequence of length J is read as one constant per mark).
    """

    r: Coefficient = 0.0
    alpha: Coefficient = 0.0
    sigma: Coefficient = 0.0
    gamma: Coefficient = 0.0
    spot: float = 100.0
    rate_bound: float = 1.0

    def __post_init__(self):
        if not self.spot > 1.0:
            raise ValueError(f"initial stock price must exceed 1, got {self.spot}")

    def resolve(self, intensity: IntensityPath, nu: JumpMeasureSpec) -> "ResolvedCoefficients":
        p, n1 = intensity.n_paths, intensity.grid.n_steps + 1
        t = intensity.grid.nodes

        def ev(c, shape):
            v = c(t, intensity) if callable(c) else c
            return np.broadcast_to(np.asarray(v, dtype=float), shape)

        j = nu.n_marks
        gamma = self.gamma
        if not callable(gamma):
            g = np.asarray(gamma, dtype=float)
            if g.ndim == 1 and g.shape[0] == j:
                g = g[None, None, :]
            elif g.ndim >= 1 and g.shape[-1] != j:
                g = g[..., None]
            gamma = g
        else:
            raw = np.asarray(gamma(t, intensity), dtype=float)
            gamma = raw if raw.ndim == 3 or (raw.ndim == 1 and raw.shape[0] == j) else raw[..., None]
        res = ResolvedCoefficients(
            r=ev(self.r, (p, n1)),
            alpha=ev(self.alpha, (p, n1)),
            sigma=ev(self.sigma, (p, n1)),
            gamma=ev(gamma, (p, n1, j)),
            spot=float(self.spot),
            dt=intensity.grid.dt,
        )
        if np.any(np.abs(res.r) > self.rate_bound):
            raise AdmissibilityError(f"|r| exceeds the bound {self.rate_bound}")
        if np.any(res.sigma < 0):
            raise AdmissibilityError("sigma must be nonnegative")
        return res


@dataclass(frozen=True)
class ResolvedCoefficients:
    """Coefficient arrays on the node grid (read-only broadcast views)."""

    r: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    spot: float
    dt: float

    @property
    def R(self) -> np.ndarray:
        """Left-point integral of r, shape (P, N + 1), starting at 0."""
        out = np.zeros(self.r.shape)
        np.cumsum(self.r[:, :-1] * self.dt, axis=1, out=out[:, 1:])
        return out

    def cells(self):
        """Left-endpoint coefficient views over the N cells."""
        return self.r[:, :-1], self.alpha[:, :-1], self.sigma[:, :-1], self.gamma[:, :-1, :]

    def excess_drift(self) -> np.ndarray:
        return (self.alpha - self.r)[:, :-1]


@dataclass(frozen=True)
class MarketPath:
    s0: np.ndarray
    s1: np.ndarray

    def __post_init__(self):
        if np.any(self.s1 <= 0):
            raise AdmissibilityError("stock price left the positive half-line")

    @property
    def discounted_stock(self) -> np.ndarray:
        return self.s1 / self.s0


def simulate_market(coeffs: ResolvedCoefficients, noise: NoisePath) -> MarketPath:
    r, alpha, sigma, gamma = coeffs.cells()
    if np.any(gamma <= -1.0):
        idx = np.argwhere(gamma <= -1.0)[0]
        raise AdmissibilityError(f"gamma <= -1 at path {idx[0]}, node {idx[1]}, mark {idx[2]}")
    dt = coeffs.dt
    lam_B = noise.intensity.cell_B
    comp = noise.jump_compensator
    log_step = (alpha - 0.5 * sigma**2 * lam_B) * dt - np.sum(gamma * comp, axis=2) + sigma * noise.dB
    log_step = log_step + np.sum(noise.counts * np.log1p(gamma), axis=2)
    logs = np.zeros((noise.n_paths, noise.grid.n_steps + 1))
    np.cumsum(log_step, axis=1, out=logs[:, 1:])
    s1 = coeffs.spot * np.exp(logs)
    s0 = np.exp(coeffs.R)
    return MarketPath(s0, s1)


@dataclass(frozen=True)
class PortfolioPath:
    """Wealth amount held in the stock over each cell, shape (P, N)."""

    pi: np.ndarray


def risky_increment(coeffs: ResolvedCoefficients, noise: NoisePath) -> np.ndarray:
    """Per-cell return noise ``(alpha - r) dt + sigma dB + sum_j gamma_j dH~_j``."""
    r, alpha, sigma, gamma = coeffs.cells()
    return (alpha - r) * coeffs.dt + sigma * noise.dB + np.sum(gamma * noise.compensated_jumps, axis=2)


def simulate_wealth(
    pi,
    coeffs: ResolvedCoefficients,
    noise: NoisePath,
    v0,
    scheme: str = "exponential",
) -> np.ndarray:
    """Wealth of a self-financing strategy, shape (P, N + 1).

    ``pi`` is a :class:`PortfolioPath`, an array of shape (P, N), or a
    callable ``pi(i, v_i) -> array`` evaluated at the left endpoint.

    ``scheme="exponential"`` (default) compounds the bond part exactly over
    each cell, ``V_{i+1} = e^{r_i dt} (V_i + pi_i dX_i)`` with ``dX`` from
    :func:`risky_increment`; a bond-only strategy then grows exactly like
    the bond, and discounted wealth moves only through the risky
    increments. ``scheme="euler"`` is the plain first-order step
    ``V_{i+1} = V_i + r_i V_i dt + pi_i dX_i``.
    """
    if scheme not in ("exponential", "euler"):
        raise ValueError(f"unknown wealth scheme {scheme!r}")
    dx = risky_increment(coeffs, noise)
    r = coeffs.r[:, :-1]
    p, n = dx.shape
    v = np.empty((p, n + 1))
    v[:, 0] = v0
    growth = np.exp(r * coeffs.dt)
    for i in range(n):
        if callable(pi):
            pi_i = np.asarray(pi(i, v[:, i]), dtype=float)
        else:
            arr = pi.pi if isinstance(pi, PortfolioPath) else np.asarray(pi, dtype=float)
            pi_i = np.broadcast_to(arr, (p, n))[:, i]
        if scheme == "exponential":
            v[:, i + 1] = growth[:, i] * (v[:, i] + pi_i * dx[:, i])
        else:
            v[:, i + 1] = v[:, i] * (1.0 + r[:, i] * coeffs.dt) + pi_i * dx[:, i]
    return v


@dataclass
class AdmissibilityReport:
    admissible: bool
    first_violation: Optional[dict] = None
    integrability_sum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_violations: int = 0

    def as_dict(self) -> dict:
        s = self.integrability_sum
        return {
            "admissible": self.admissible,
            "first_violation": self.first_violation,
            "n_violations": self.n_violations,
            "integrability_sum_max": float(s.max()) if s.size else 0.0,
            "integrability_sum_mean": float(s.mean()) if s.size else 0.0,
        }


def check_portfolio_admissible(
    pi, coeffs: ResolvedCoefficients, intensity: IntensityPath, nu: JumpMeasureSpec
) -> AdmissibilityReport:
    """Check ``pi gamma > -1`` on every cell and mark, and report the integrability sum.

    The sum per path is ``sum_i (|alpha - r||pi| + (pi sigma)^2 lambda_B
    + sum_j (pi gamma_j)^2 nu_j lambda_H) dt``.
    """
    arr = pi.pi if isinstance(pi, PortfolioPath) else np.asarray(pi, dtype=float)
    p, n = intensity.n_paths, intensity.grid.n_steps
    arr = np.broadcast_to(arr, (p, n))
    r, alpha, sigma, gamma = coeffs.cells()
    prod = arr[:, :, None] * gamma
    bad = prod <= -1.0
    dt = coeffs.dt
    integ = (
        np.abs(alpha - r) * np.abs(arr)
        + (arr * sigma) ** 2 * intensity.cell_B
        + np.sum(prod**2 * nu.nu[None, None, :], axis=2) * intensity.cell_H
    ) * dt
    total = integ.sum(axis=1)
    first = None
    if bad.any() or not np.all(np.isfinite(total)):
        if bad.any():
            a, i, j = (int(x) for x in np.argwhere(bad)[0])
            first = {
                "path": a,
                "node": i,
                "mark": float(nu.marks[j]),
                "pi_gamma": float(prod[a, i, j]),
                "reason": "pi * gamma <= -1",
            }
        else:
            a = int(np.argwhere(~np.isfinite(total))[0][0])
            first = {"path": a, "node": None, "mark": None, "reason": "integrability sum is not finite"}
    return AdmissibilityReport(first is None, first, total, int(bad.sum()))


def market_to_csv(market: MarketPath, fh, t_nodes: np.ndarray, max_paths: Optional[int] = None) -> None:
    p = market.s1.shape[0] if max_paths is None else min(max_paths, market.s1.shape[0])
    fh.write("path,node,t,s0,s1\n")
    for a in range(p):
        for i, t in enumerate(t_nodes):
            fh.write(f"{a},{i},{t!r},{market.s0[a, i]!r},{market.s1[a, i]!r}\n")
