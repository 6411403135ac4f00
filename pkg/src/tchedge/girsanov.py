"""Shift transformations of the noises and the induced density process.

A shift ``theta = (theta_B, theta_H)`` defines ``Q`` through the positive
martingale ``Z`` whose per-cell log increment is

    theta_B dB - 1/2 theta_B^2 lambda_B dt
    + sum_j [ln(1 + theta_H_j) N_j - theta_H_j nu_j lambda_H dt].

Under ``Q`` the cell increments are exactly ``dB ~ N(theta_B lambda_B dt,
lambda_B dt)`` and ``N_j ~ Poisson((1 + theta_H_j) nu_j lambda_H dt)``
given the intensity, so the grid density is exact, not an approximation.
All expectations under ``Q`` are computed by reweighting the simulated
``P`` sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .intensity import IntensityPath
from .market import AdmissibilityError
from .noise import JumpMeasureSpec, NoisePath
from .regression import F, Projector, RegressionBasis, check_filtration

DEFAULT_BOUND = 50.0


@dataclass(frozen=True)
class ScenarioShift:
    """Per-cell shift values; ``theta_B`` broadcasts to (P, N), ``theta_H`` to (P, N, J).

    ``bound`` is the constant K of the admissible set. By default the
    jump-side bound is read as ``|theta_H| sqrt(lambda_H) < K |z|``; with
    ``one_sided=True`` the literal ``0 <= theta_H sqrt(lambda_H) < K z``
    is enforced instead, which rules out negative tilts and negative marks.
    """

    theta_B: np.ndarray
    theta_H: np.ndarray
    bound: float = DEFAULT_BOUND
    filtration: str = F
    one_sided: bool = False

    def __post_init__(self):
        object.__setattr__(self, "theta_B", np.asarray(self.theta_B, dtype=float))
        object.__setattr__(self, "theta_H", np.asarray(self.theta_H, dtype=float))
        object.__setattr__(self, "filtration", check_filtration(self.filtration))
        if not self.bound > 0:
            raise ValueError("bound must be positive")
        if not np.all(np.isfinite(self.theta_B)) or not np.all(np.isfinite(self.theta_H)):
            raise AdmissibilityError("shift values must be finite")
        if np.any(self.theta_H <= -1.0):
            idx = np.unravel_index(np.argmax(self.theta_H <= -1.0), self.theta_H.shape)
            raise AdmissibilityError(f"theta_H <= -1 at index {tuple(int(v) for v in idx)}")

    @classmethod
    def constant(cls, theta_B: float, theta_H, **kw) -> "ScenarioShift":
        """Shift constant in time; ``theta_H`` is a scalar or one value per mark."""
        th = np.atleast_1d(np.asarray(theta_H, dtype=float))
        return cls(np.asarray(float(theta_B)), th[None, None, :], **kw)

    @classmethod
    def zero(cls, **kw) -> "ScenarioShift":
        return cls(np.asarray(0.0), np.zeros((1, 1, 1)), **kw)

    def fields(self, noise: NoisePath) -> tuple[np.ndarray, np.ndarray]:
        p, n, j = noise.counts.shape
        try:
            tb = np.broadcast_to(self.theta_B, (p, n))
            th = np.broadcast_to(self.theta_H, (p, n, j))
        except ValueError:
            raise ValueError("shift does not match the noise grid") from None
        return tb, th

    def scaled(self, factor_B: float = 1.0, factor_H: float = 1.0) -> "ScenarioShift":
        return ScenarioShift(
            self.theta_B * factor_B, self.theta_H * factor_H, self.bound, self.filtration, self.one_sided
        )

    def admissibility(self, intensity: IntensityPath, nu: JumpMeasureSpec) -> dict:
        p, n = intensity.n_paths, intensity.grid.n_steps
        tb = np.broadcast_to(self.theta_B, (p, n))
        th = np.broadcast_to(self.theta_H, (p, n, nu.n_marks))
        k = self.bound
        viol_B = ~(np.abs(tb * intensity.cell_B) < k)
        scaled_H = th * np.sqrt(intensity.cell_H)[:, :, None]
        z = nu.z[None, None, :]
        if self.one_sided:
            viol_H = ~((scaled_H >= 0) & (scaled_H < k * z))
        else:
            viol_H = ~(np.abs(scaled_H) < k * np.abs(z))
        viol_H |= th <= -1.0
        report = {
            "admissible": not (viol_B.any() or viol_H.any()),
            "n_violations_B": int(viol_B.sum()),
            "n_violations_H": int(viol_H.sum()),
            "first_violation": None,
        }
        if viol_B.any():
            a, i = (int(v) for v in np.argwhere(viol_B)[0])
            report["first_violation"] = {"component": "B", "path": a, "node": i, "value": float(tb[a, i] * intensity.cell_B[a, i])}
        elif viol_H.any():
            a, i, jj = (int(v) for v in np.argwhere(viol_H)[0])
            report["first_violation"] = {
                "component": "H",
                "path": a,
                "node": i,
                "mark": float(nu.marks[jj]),
                "value": float(scaled_H[a, i, jj]),
            }
        return report

    def ensure_admissible(self, intensity: IntensityPath, nu: JumpMeasureSpec) -> None:
        rep = self.admissibility(intensity, nu)
        if not rep["admissible"]:
            raise AdmissibilityError(f"inadmissible scenario: {rep['first_violation']}")


@dataclass(frozen=True)
class DensityPath:
    """``log Z`` per node, shape (P, N + 1), with ``log Z_0 = 0``."""

    log_z: np.ndarray

    @cached_property
    def z(self) -> np.ndarray:
        return np.exp(self.log_z)

    @property
    def terminal(self) -> np.ndarray:
        return self.z[:, -1]

    @property
    def one_step(self) -> np.ndarray:
        """``Z_{i+1} / Z_i`` per cell, shape (P, N)."""
        return np.exp(np.diff(self.log_z, axis=1))

    def ratio(self, i: int) -> np.ndarray:
        """``Z_T / Z_{t_i}``."""
        return np.exp(self.log_z[:, -1] - self.log_z[:, i])


def density_increments(theta: ScenarioShift, noise: NoisePath) -> np.ndarray:
    tb, th = theta.fields(noise)
    dt = noise.grid.dt
    lam_B = noise.intensity.cell_B
    inc = tb * noise.dB - 0.5 * tb**2 * lam_B * dt
    inc = inc + np.sum(np.log1p(th) * noise.counts - th * noise.jump_compensator, axis=2)
    return inc


def density_path(theta: ScenarioShift, noise: NoisePath) -> DensityPath:
    inc = density_increments(theta, noise)
    log_z = np.zeros((noise.n_paths, noise.grid.n_steps + 1))
    np.cumsum(inc, axis=1, out=log_z[:, 1:])
    return DensityPath(log_z)


def shifted_fields(theta: ScenarioShift, noise: NoisePath) -> tuple[np.ndarray, np.ndarray]:
    """``(dB^theta, dH~^theta)`` with shapes (P, N) and (P, N, J)."""
    tb, th = theta.fields(noise)
    dB_theta = noise.dB - tb * noise.intensity.cell_B * noise.grid.dt
    dH_theta = noise.compensated_jumps - th * noise.jump_compensator
    return dB_theta, dH_theta


@dataclass(frozen=True)
class ReweightedMean:
    """Self-normalized estimate ``sum w x / sum w`` with diagnostics.

    ``raw`` is ``mean(w x)``; ``se`` is the delta-method standard error of
    ``value``; ``weight_mean`` and ``weight_second_moment`` describe the
    weights themselves.
    """

    value: float
    raw: float
    se: float
    raw_se: float
    weight_mean: float
    weight_second_moment: float
    n: int


def weighted_mean(weights: np.ndarray, x: np.ndarray) -> ReweightedMean:
    w = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    w = np.broadcast_to(w, x.shape)
    wm = float(w.mean())
    value = float(np.sum(w * x) / np.sum(w))
    wx = w * x
    raw = float(wx.mean())
    raw_se = float(wx.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    infl = w * (x - value) / wm
    se = float(infl.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return ReweightedMean(value, raw, se, raw_se, wm, float(np.mean(w * w)), n)


def reweighted_expectation(
    z_T: np.ndarray,
    payoff: np.ndarray,
    basis: Optional[RegressionBasis] = None,
    node: Optional[int] = None,
    z_t: Optional[np.ndarray] = None,
    projector: Optional[Projector] = None,
):
    """``E_Q[payoff]`` or, with a basis and node, ``E_Q[payoff | info at node]``.

    The conditional version applies Bayes' rule: regress ``w payoff`` and
    ``w`` on the node basis and take the ratio of fitted values, with
    ``w = Z_T / Z_t`` when ``z_t`` is given (whose conditional mean is 1)
    and ``w = Z_T`` otherwise.
    """
    payoff = np.asarray(payoff, dtype=float)
    z_T = np.asarray(z_T, dtype=float)
    if basis is None and projector is None:
        return weighted_mean(z_T, payoff)
    if projector is None:
        if node is None:
            raise ValueError("conditional expectation needs a node index")
        projector = basis.projector(node)
    w = z_T if z_t is None else z_T / np.asarray(z_t, dtype=float)
    fitted = projector.fit(np.column_stack([w * payoff, w]))
    denom = fitted[:, 1]
    floor = 0.1 * max(float(np.mean(w)), 1e-300)
    denom = np.where(denom > floor, denom, floor)
    return fitted[:, 0] / denom


def structure_check_deterministic_theta(theta: ScenarioShift, noise: NoisePath, density: Optional[DensityPath] = None) -> dict:
    """Compare reweighted jump counts with ``(1 + theta_H) nu lambda_H dt``.

    For every mark the statistic ``sum_i (N_ij - (1 + theta_H_ij) nu_j
    lambda_H_i dt)`` is reweighted by ``Z_T``; its ``Q``-mean is 0 when the
    corollary holds. Also reported: the implied intensity multiplier and the
    reweighted mark distribution against ``(1 + theta_H) nu`` normalized.
    """
    tb, th = theta.fields(noise)
    if not (np.ptp(th, axis=(0, 1)) == 0).all():
        raise ValueError("structure check needs theta_H constant over paths and cells")
    dens = density or density_path(theta, noise)
    w = dens.terminal
    expected = (1.0 + th) * noise.jump_compensator
    marks = []
    q_counts = []
    for j, zj in enumerate(noise.nu.marks):
        counts = noise.counts[:, :, j].sum(axis=1)
        exp_j = expected[:, :, j].sum(axis=1)
        gap = weighted_mean(w, counts - exp_j)
        cnt = weighted_mean(w, counts)
        base = weighted_mean(w, noise.jump_compensator[:, :, j].sum(axis=1))
        q_counts.append(cnt.value)
        marks.append(
            {
                "mark": zj,
                "theta_H": float(th[0, 0, j]),
                "gap": gap.value,
                "gap_se": gap.se,
                "z_score": gap.value / gap.se if gap.se > 0 else 0.0,
                "intensity_multiplier": cnt.value / base.value if base.value > 0 else float("nan"),
                "expected_multiplier": 1.0 + float(th[0, 0, j]),
            }
        )
    q_counts = np.array(q_counts)
    target = (1.0 + th[0, 0, :]) * noise.nu.nu
    dist = {
        "reweighted": (q_counts / q_counts.sum()).tolist() if q_counts.sum() > 0 else None,
        "expected": (target / target.sum()).tolist(),
    }
    return {"marks": marks, "mark_distribution": dist, "weight_mean": float(w.mean())}
