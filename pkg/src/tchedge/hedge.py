"""Worst-case scenario hedging.

Pipeline for a claim ``F`` on one ensemble:

1. the worst-case shift solves the drift equation
   ``(alpha - r) + sigma theta_B lamB + sum_j gamma_j theta_H_j nu_j lamH = 0``;
2. the discounted claim is represented under that measure by a zero-driver
   backward regression, giving integrands ``Z``, ``U`` and the non-integral
   component ``xi0``;
3. the portfolio matches ``e^R Z`` and ``e^R U`` with ``pi sigma`` and
   ``pi gamma`` in the least-squares sense;
4. the price is ``e^R`` times the conditional value of the discounted
   claim, the wealth of the portfolio starts from ``v``, and the cost is the
   gap between price and wealth.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bsde import BSDESolution, solve_backward_regression, zero_driver
from .ensemble import Ensemble
from .girsanov import (
    DEFAULT_BOUND,
    DensityPath,
    ScenarioShift,
    density_path,
    reweighted_expectation,
    weighted_mean,
)
from .market import AdmissibilityError, simulate_wealth
from .regression import F, G, RegressionBasis, check_filtration, markov_basis


class NoScenarioError(ValueError):
    """The drift equation has no solution at some node."""


# -- claims ---------------------------------------------------------------------


@dataclass(frozen=True)
class Claim:
    """A payoff rule evaluated on the terminal state of every path."""

    kind: str
    params: dict = field(default_factory=dict)

    def payoff(self, ensemble: Ensemble) -> np.ndarray:
        p = self.params
        s_T = ensemble.market.s1[:, -1]
        if self.kind == "call":
            out = np.maximum(s_T - p["strike"], 0.0)
        elif self.kind == "put":
            out = np.maximum(p["strike"] - s_T, 0.0)
        elif self.kind == "digital":
            out = np.where(s_T > p["strike"], float(p.get("cash", 1.0)), 0.0)
        elif self.kind == "intensity_exp":
            comp = p.get("component", "B")
            lam_T = ensemble.intensity.cum_B[:, -1] if comp == "B" else ensemble.intensity.cum_H[:, -1]
            out = p.get("scale", 1.0) * np.exp(-p.get("rate", 1.0) * lam_T)
        elif self.kind == "zero":
            out = np.zeros(ensemble.n_paths)
        else:
            raise ValueError(f"unknown claim kind {self.kind!r}")
        if not np.all(np.isfinite(out)):
            raise ValueError("claim is not finite on every path")
        return out

    def second_moment(self, ensemble: Ensemble) -> float:
        return float(np.mean(self.payoff(ensemble) ** 2))


# -- worst-case scenario ------------------------------------------------------------


@dataclass(frozen=True)
class WorstCaseScenario:
    theta: ScenarioShift
    rule: str
    kappa: Optional[np.ndarray]
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))


def drift_residual(theta: ScenarioShift, ensemble: Ensemble) -> np.ndarray:
    """``(alpha - r) + sigma theta_B lamB + sum_j gamma_j theta_H_j nu_j lamH`` per cell."""
    tb, th = theta.fields(ensemble.noise)
    r, alpha, sigma, gamma = ensemble.coeffs.cells()
    ip = ensemble.intensity
    return (alpha - r) + sigma * tb * ip.cell_B + np.sum(gamma * th * ensemble.nu.nu, axis=2) * ip.cell_H


def solve_market_price_equation(
    ensemble: Ensemble,
    rule: str = "minimal-norm",
    theta: Optional[ScenarioShift] = None,
    bound: float = DEFAULT_BOUND,
    filtration: str = F,
    one_sided: bool = False,
    tol: float = 1e-10,
) -> WorstCaseScenario:
    """Worst-case shift solving the drift equation at every cell.

    ``minimal-norm`` picks the solution of smallest
    ``theta_B^2 lamB + sum_j theta_H_j^2 nu_j lamH``:
    ``theta_B = kappa sigma``, ``theta_H_j = kappa gamma_j`` with
    ``kappa = -(alpha - r) / (sigma^2 lamB + sum_j gamma_j^2 nu_j lamH)``
    (``kappa = 0`` where ``alpha = r``). ``user-supplied`` validates a given
    ``theta`` against the equation.
    """
    filtration = check_filtration(filtration)
    ip = ensemble.intensity
    if rule == "user-supplied":
        if theta is None:
            raise ValueError("user-supplied rule needs a theta")
        res = drift_residual(theta, ensemble)
        scale = 1.0 + np.abs(ensemble.coeffs.excess_drift())
        if np.any(np.abs(res) > tol * scale):
            a, i = (int(v) for v in np.argwhere(np.abs(res) > tol * scale)[0])
            raise NoScenarioError(f"supplied scenario misses the drift equation at path {a}, node {i}")
        theta.ensure_admissible(ip, ensemble.nu)
        return WorstCaseScenario(theta, rule, None, res)
    if rule != "minimal-norm":
        raise ValueError(f"unknown selection rule {rule!r}")
    r, alpha, sigma, gamma = ensemble.coeffs.cells()
    excess = alpha - r
    nu = ensemble.nu.nu
    denom = sigma**2 * ip.cell_B + np.sum(gamma**2 * nu, axis=2) * ip.cell_H
    bad = (denom <= 0) & (excess != 0)
    if bad.any():
        a, i = (int(v) for v in np.argwhere(bad)[0])
        raise NoScenarioError(f"no admissible scenario solves the drift equation (path {a}, node {i})")
    kappa = np.divide(-excess, denom, out=np.zeros(denom.shape), where=excess != 0)
    tb = kappa * sigma
    th = kappa[:, :, None] * gamma
    if np.any(th <= -1.0):
        a, i, j = (int(v) for v in np.argwhere(th <= -1.0)[0])
        raise AdmissibilityError(f"worst-case theta_H <= -1 at path {a}, node {i}, mark {ensemble.nu.marks[j]}")
    shift = ScenarioShift(tb, th, bound, filtration, one_sided)
    shift.ensure_admissible(ip, ensemble.nu)
    return WorstCaseScenario(shift, rule, kappa, drift_residual(shift, ensemble))


# -- representation and portfolio --------------------------------------------------------


@dataclass
class Representation:
    discounted_claim: np.ndarray
    solution: BSDESolution
    xi0: np.ndarray
    density: DensityPath

    @property
    def z_hat(self) -> np.ndarray:
        return self.solution.z

    @property
    def u_hat(self) -> np.ndarray:
        return self.solution.u


def martingale_representation(
    claim_values: np.ndarray,
    scenario: WorstCaseScenario,
    ensemble: Ensemble,
    basis: RegressionBasis,
    filtration: str = F,
) -> Representation:
    """Represent ``e^{-R_T} F`` under the worst-case measure.

    The zero-driver backward regression runs on the shifted fields with
    one-step density weights. ``xi0`` is the node-0 value per path in the G
    filtration (the part known from the intensity path) and, in the F
    filtration, that value plus the summed orthogonal remainder, i.e. the
    component of the discounted claim not reached by stochastic integrals.
    """
    filtration = check_filtration(filtration)
    xi = ensemble.discount[:, -1] * np.asarray(claim_values, dtype=float)
    sol = solve_backward_regression(zero_driver(filtration), xi, ensemble, basis, scenario.theta)
    if filtration == G:
        xi0 = sol.y[:, 0].copy()
    else:
        xi0 = sol.y[:, 0] + sol.n_increments.sum(axis=1)
    return Representation(xi, sol, xi0, density_path(scenario.theta, ensemble.noise))


@dataclass
class PortfolioFit:
    pi: np.ndarray
    residual_B: np.ndarray
    residual_H: np.ndarray
    degenerate: np.ndarray


def optimal_portfolio(z_hat: np.ndarray, u_hat: np.ndarray, ensemble: Ensemble) -> PortfolioFit:
    """Least-squares solve of the two integrand-matching equations per cell.

    Minimizes ``(a - pi sigma)^2 lamB + (sum_j (b_j - pi gamma_j) nu_j lamH)^2``
    with ``a = e^R Z`` and ``b = e^R U``. Cells where the minimizer is not
    determined get ``pi = 0`` and are flagged.
    """
    r, alpha, sigma, gamma = ensemble.coeffs.cells()
    ip = ensemble.intensity
    growth = ensemble.market.s0[:, :-1]
    nu = ensemble.nu.nu
    a = growth * z_hat
    b = growth[:, :, None] * u_hat
    lb, lh = ip.cell_B, ip.cell_H
    gsum = np.sum(gamma * nu, axis=2) * lh
    ssum = np.sum(b * nu, axis=2) * lh
    denom = sigma**2 * lb + gsum**2
    scale = 1.0 + sigma**2 * lb + np.sum(gamma**2 * nu, axis=2) * lh
    degenerate = denom <= 1e-14 * scale
    pi = np.divide(lb * sigma * a + gsum * ssum, denom, out=np.zeros(denom.shape), where=~degenerate)
    res_B = (a - pi * sigma) * lb
    res_H = np.sum((b - pi[:, :, None] * gamma) * nu, axis=2) * lh
    return PortfolioFit(pi, res_B, res_H, degenerate)


# -- price, wealth, cost ------------------------------------------------------------------


@dataclass
class HedgeResult:
    """Outputs of the hedging pipeline (arrays are per path and node/cell)."""

    filtration: str
    scenario: WorstCaseScenario
    representation: Representation
    portfolio: PortfolioFit
    claim: np.ndarray
    y_hat: np.ndarray
    v: float
    wealth: np.ndarray
    cost: np.ndarray

    @property
    def pi_hat(self) -> np.ndarray:
        return self.portfolio.pi

    @property
    def z_hat(self) -> np.ndarray:
        return self.representation.z_hat

    @property
    def u_hat(self) -> np.ndarray:
        return self.representation.u_hat

    @property
    def xi0(self) -> np.ndarray:
        return self.representation.xi0

    @property
    def consistency_residual(self) -> np.ndarray:
        return self.portfolio.residual_H


def optimal_price_and_cost(
    claim_values: np.ndarray,
    scenario: WorstCaseScenario,
    rep: Representation,
    portfolio: PortfolioFit,
    ensemble: Ensemble,
    filtration: str = F,
) -> HedgeResult:
    """Price ``Y_hat = e^R y``, wealth from ``v`` and cost ``C = Y_hat - V``.

    F filtration: ``v = y_0`` and the wealth starts at ``v``, so ``C_0 = 0``.
    G filtration: ``v`` is the sample mean of the node-0 values; the
    difference ``Y_hat_0 - v`` is injected at time 0 (``C_0``) and the
    wealth then runs from ``Y_hat_0``, so ``C_t`` for ``t > 0`` measures any
    further injection needed.
    """
    filtration = check_filtration(filtration)
    growth = ensemble.market.s0
    y_hat = growth * rep.solution.y
    y_hat[:, -1] = claim_values
    y0 = rep.solution.y[:, 0]
    v = float(np.mean(y0))
    start = np.full(ensemble.n_paths, v) if filtration == F else y_hat[:, 0]
    wealth = simulate_wealth(portfolio.pi, ensemble.coeffs, ensemble.noise, start)
    cost = y_hat - wealth
    if filtration == G:
        cost[:, 0] = y_hat[:, 0] - v
    return HedgeResult(filtration, scenario, rep, portfolio, np.asarray(claim_values, dtype=float), y_hat, v, wealth, cost)


def hedge_claim(
    ensemble: Ensemble,
    claim: Claim,
    filtration: str = F,
    basis: Optional[RegressionBasis] = None,
    rule: str = "minimal-norm",
    theta: Optional[ScenarioShift] = None,
    bound: float = DEFAULT_BOUND,
    one_sided: bool = False,
) -> HedgeResult:
    """Run the whole pipeline with stage labels on errors."""
    filtration = check_filtration(filtration)
    stage = "claim"
    try:
        values = claim.payoff(ensemble)
        stage = "scenario"
        wc = solve_market_price_equation(ensemble, rule, theta, bound, filtration, one_sided)
        stage = "representation"
        basis = basis or markov_basis(ensemble, filtration)
        rep = martingale_representation(values, wc, ensemble, basis, filtration)
        stage = "portfolio"
        pf = optimal_portfolio(rep.z_hat, rep.u_hat, ensemble)
        stage = "price"
        return optimal_price_and_cost(values, wc, rep, pf, ensemble, filtration)
    except Exception as exc:  # re-raise with the stage name, keep the type
        exc.args = (f"[{stage}] {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
        raise


# -- driver and saddle check ------------------------------------------------------------


def excess_drift_under(theta: ScenarioShift, ensemble: Ensemble) -> np.ndarray:
    """``D(theta) = (alpha - r) + sigma theta_B lamB + sum_j gamma_j theta_H_j nu_j lamH``."""
    return drift_residual(theta, ensemble)


def hedge_driver(pi: np.ndarray, theta: ScenarioShift, result: HedgeResult, ensemble: Ensemble) -> np.ndarray:
    """Driver of the value equation evaluated along the optimal solution, shape (P, N).

    ``g(pi, theta) = -y r - pi D(theta) + e^R (Z theta_B lamB + sum_j U_j theta_H_j nu_j lamH)``
    with ``y = Y_hat`` and ``(Z, U)`` the optimal integrands.
    """
    tb, th = theta.fields(ensemble.noise)
    r = ensemble.coeffs.r[:, :-1]
    ip = ensemble.intensity
    growth = ensemble.market.s0[:, :-1]
    y = result.y_hat[:, :-1]
    pi = np.broadcast_to(pi, y.shape)
    tilt = result.z_hat * tb * ip.cell_B + np.sum(result.u_hat * th * ensemble.nu.nu, axis=2) * ip.cell_H
    return -y * r - pi * excess_drift_under(theta, ensemble) + growth * tilt


def value_under(pi: np.ndarray, theta: ScenarioShift, claim_values: np.ndarray, ensemble: Ensemble):
    """Per-path integrand of ``Y^{pi,theta}_0`` and the density weights.

    ``Y^{pi,theta}_0 = E_theta[e^{-R_T} F - sum_i e^{-R_i} pi_i D_i(theta) dt]``.
    """
    disc = ensemble.discount
    d = excess_drift_under(theta, ensemble)
    pi = np.broadcast_to(pi, d.shape)
    x = disc[:, -1] * claim_values - np.sum(disc[:, :-1] * pi * d, axis=1) * ensemble.grid.dt
    return x, density_path(theta, ensemble.noise).terminal


def _paired(w1, x1, w2, x2):
    """Difference of two self-normalized means on the same paths, with paired SE."""
    m1, m2 = w1.mean(), w2.mean()
    v1 = np.sum(w1 * x1) / np.sum(w1)
    v2 = np.sum(w2 * x2) / np.sum(w2)
    infl = w1 * (x1 - v1) / m1 - w2 * (x2 - v2) / m2
    return float(v1 - v2), float(infl.std(ddof=1) / np.sqrt(x1.size))


def verify_saddle(
    result: HedgeResult,
    ensemble: Ensemble,
    rel: float = 0.1,
    n_sigma: float = 3.0,
    abs_tol: float = 1e-12,
) -> dict:
    """Check the saddle inequalities around ``(pi_hat, theta_hat)``.

    Driver level, cellwise: ``g(pi_hat, theta) <= g(pi_hat, theta_hat)`` and
    ``g(pi, theta_hat) >= g(pi_hat, theta_hat)``; the largest violation of
    each is reported together with the theta-slope
    ``max |(e^R Z - pi sigma) lamB|, |(e^R U_j - pi gamma_j) nu_j lamH|``,
    which is zero when the matching equations hold exactly. When it is not
    (an incomplete market, where the portfolio only matches the integrands
    in the least-squares sense) the theta-side driver inequality is not
    implied and ``matching_exact`` is False.

    Value level: ``Y^{pi,theta}_0`` by reweighting for ``theta`` scaled by
    ``1 +- rel`` (jointly and per component) at ``pi_hat``, and for
    ``pi_hat (1 +- rel)`` at ``theta_hat``; the tolerance is
    ``n_sigma`` paired standard errors plus ``abs_tol``.
    """
    th_hat = result.scenario.theta
    pi_hat = result.pi_hat
    F_vals = result.claim
    g_ref = hedge_driver(pi_hat, th_hat, result, ensemble)
    scale = 1.0 + np.abs(g_ref)
    factors = [1.0 - rel, 1.0 + rel]
    thetas = []
    for fb in [1.0] + factors:
        for fh in [1.0] + factors:
            if fb == 1.0 and fh == 1.0:
                continue
            try:
                t = th_hat.scaled(fb, fh)
                t.ensure_admissible(ensemble.intensity, ensemble.nu)
            except AdmissibilityError:
                continue
            thetas.append(((fb, fh), t))
    drv_theta = max(float(np.max((hedge_driver(pi_hat, t, result, ensemble) - g_ref) / scale)) for _, t in thetas)
    drv_pi = max(float(np.max((g_ref - hedge_driver(pi_hat * f, th_hat, result, ensemble)) / scale)) for f in factors)
    growth = ensemble.market.s0[:, :-1]
    ip = ensemble.intensity
    _, _, sigma, gamma = ensemble.coeffs.cells()
    slope_B = np.abs((growth * result.z_hat - pi_hat * sigma) * ip.cell_B)
    slope_H = np.abs((growth[:, :, None] * result.u_hat - pi_hat[:, :, None] * gamma) * ensemble.nu.nu * ip.cell_H[:, :, None])
    slope = float(max(slope_B.max(), slope_H.max()))

    x_ref, w_ref = value_under(pi_hat, th_hat, F_vals, ensemble)
    y_ref = weighted_mean(w_ref, x_ref).value
    theta_rows, pi_rows = [], []
    for (fb, fh), t in thetas:
        x, w = value_under(pi_hat, t, F_vals, ensemble)
        diff, se = _paired(w, x, w_ref, x_ref)
        theta_rows.append({"scale_B": fb, "scale_H": fh, "diff": diff, "se": se, "ok": diff <= n_sigma * se + abs_tol})
    for f in factors:
        x, w = value_under(pi_hat * f, th_hat, F_vals, ensemble)
        diff, se = _paired(w, x, w_ref, x_ref)
        pi_rows.append({"scale_pi": f, "diff": diff, "se": se, "ok": diff >= -(n_sigma * se + abs_tol)})
    return {
        "y0": y_ref,
        "driver_theta_violation": drv_theta,
        "driver_pi_violation": drv_pi,
        "theta_slope": slope,
        "driver_ok": drv_theta <= 1e-9 and drv_pi <= 1e-9,
        "matching_exact": slope <= 1e-9 * (1.0 + float(np.max(np.abs(g_ref)))),
        "value_theta": theta_rows,
        "value_pi": pi_rows,
        "value_ok": all(r["ok"] for r in theta_rows + pi_rows),
    }


# -- risk measure ---------------------------------------------------------------------


def scenario_family(
    wc: WorstCaseScenario, scales: Sequence[float] = (0.0, 0.5, 1.0, 1.5), mark_tilts: Sequence[float] = ()
) -> list:
    """Shifts around ``theta_hat``: joint scalings, plus constant tilts added to ``theta_H``."""
    base = wc.theta
    fam = [base.scaled(s, s) for s in scales]
    for tilt in mark_tilts:
        fam.append(ScenarioShift(base.theta_B, base.theta_H + tilt, base.bound, base.filtration, base.one_sided))
    return fam


@dataclass
class RiskResult:
    value: np.ndarray
    per_scenario: list
    argmax: np.ndarray


def risk_measure(
    position: np.ndarray,
    family: Sequence[ScenarioShift],
    ensemble: Ensemble,
    t_index: int = 0,
    basis: Optional[RegressionBasis] = None,
    densities: Optional[Sequence[DensityPath]] = None,
) -> RiskResult:
    """``max over the family of E_theta[-position | info at t]``.

    At ``t_index = 0`` each term is a self-normalized reweighted mean and
    the result is a scalar; later nodes use Bayes-rule regression on the
    basis and return one value per path. A finite family gives a lower
    bound for the supremum over all admissible shifts.
    """
    if not family:
        raise ValueError("scenario family is empty")
    x = -np.asarray(position, dtype=float)
    densities = densities or [density_path(t, ensemble.noise) for t in family]
    for t in family:
        t.ensure_admissible(ensemble.intensity, ensemble.nu)
    vals = []
    if t_index == 0:
        for d in densities:
            vals.append(weighted_mean(d.terminal, x).value)
        arr = np.array(vals)
        k = int(np.argmax(arr))
        return RiskResult(np.asarray(arr[k]), vals, np.asarray(k))
    basis = basis or markov_basis(ensemble, family[0].filtration)
    proj = basis.projector(t_index)
    for d in densities:
        vals.append(reweighted_expectation(d.terminal, x, projector=proj, z_t=d.z[:, t_index]))
    stack = np.vstack(vals)
    return RiskResult(stack.max(axis=0), vals, stack.argmax(axis=0))


# -- export ---------------------------------------------------------------------------


NODE_COLUMNS = [
    "node", "t", "pi_mean", "pi_sd", "y_hat_mean", "y_hat_sd", "wealth_mean", "wealth_sd",
    "cost_mean", "cost_rms", "residual_B_rms", "residual_H_rms", "theta_B_mean", "kappa_mean",
]


def node_rows(result: HedgeResult, ensemble: Ensemble) -> list:
    """Per-node summary across paths (cell quantities are reported at their left node)."""
    n = ensemble.grid.n_steps
    t = ensemble.grid.nodes
    tb, _ = result.scenario.theta.fields(ensemble.noise)
    kappa = result.scenario.kappa
    rows = []
    for i in range(n + 1):
        cell = i < n

        def cstat(a, f):
            return float(f(a[:, i])) if cell else 0.0

        rows.append(
            {
                "node": i,
                "t": float(t[i]),
                "pi_mean": cstat(result.pi_hat, np.mean),
                "pi_sd": cstat(result.pi_hat, np.std),
                "y_hat_mean": float(result.y_hat[:, i].mean()),
                "y_hat_sd": float(result.y_hat[:, i].std()),
                "wealth_mean": float(result.wealth[:, i].mean()),
                "wealth_sd": float(result.wealth[:, i].std()),
                "cost_mean": float(result.cost[:, i].mean()),
                "cost_rms": float(np.sqrt(np.mean(result.cost[:, i] ** 2))),
                "residual_B_rms": cstat(result.portfolio.residual_B, lambda a: np.sqrt(np.mean(a * a))),
                "residual_H_rms": cstat(result.portfolio.residual_H, lambda a: np.sqrt(np.mean(a * a))),
                "theta_B_mean": cstat(tb, np.mean),
                "kappa_mean": cstat(kappa, np.mean) if kappa is not None else 0.0,
            }
        )
    return rows


def write_node_csv(result: HedgeResult, ensemble: Ensemble, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(NODE_COLUMNS)
    for row in node_rows(result, ensemble):
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in NODE_COLUMNS])


def summary(result: HedgeResult, ensemble: Ensemble, saddle: Optional[dict] = None, rho0: Optional[float] = None) -> dict:
    disc_stock = ensemble.market.discounted_stock[:, -1]
    rn = weighted_mean(result.representation.density.terminal, disc_stock)
    out = {
        "filtration": result.filtration,
        "v": result.v,
        "y_hat_0_mean": float(result.y_hat[:, 0].mean()),
        "cost_0_mean": float(result.cost[:, 0].mean()),
        "cost_0_rms": float(np.sqrt(np.mean(result.cost[:, 0] ** 2))),
        "max_abs_cost_after_0": float(np.max(np.abs(result.cost[:, 1:]))),
        "max_rms_cost_after_0": float(np.max(np.sqrt(np.mean(result.cost[:, 1:] ** 2, axis=0)))),
        "max_abs_pi": float(np.max(np.abs(result.pi_hat))),
        "theta_B_max_abs": float(np.max(np.abs(result.scenario.theta.theta_B))),
        "theta_H_max_abs": float(np.max(np.abs(result.scenario.theta.theta_H))),
        "theta_is_zero": bool(np.all(result.scenario.theta.theta_B == 0) and np.all(result.scenario.theta.theta_H == 0)),
        "drift_residual_max": result.scenario.max_residual,
        "degenerate_cells": int(result.portfolio.degenerate.sum()),
        "risk_neutral_discounted_stock": {"mean": rn.value, "se": rn.se, "spot": float(ensemble.coeffs.spot)},
        "density_second_moment": rn.weight_second_moment,
        "matching_residual_B_max": float(np.max(np.abs(result.portfolio.residual_B))),
        "matching_residual_H_max": float(np.max(np.abs(result.portfolio.residual_H))),
    }
    if rho0 is not None:
        out["rho_0"] = float(rho0)
    if saddle is not None:
        out["saddle"] = {k: v for k, v in saddle.items()}
    return out


def dump_json(obj, fh) -> None:
    json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
    fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
