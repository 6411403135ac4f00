"""Backward equations driven by the Gaussian and compensated jump fields.

Convention: ``Y_t = xi + int_t^T g ds - int phi dmu (- (N_T - N_t))`` so one
grid step reads ``Y_i = E[Y_{i+1} | info_i] + g_i dt``.

Three solvers share a path ensemble:

* :func:`solve_backward_regression` -- generic least-squares backward
  induction for any Lipschitz driver, optionally under a shifted measure.
* :func:`solve_linear_gamma` -- closed-form adjoint representation for linear
  drivers in the G filtration.
* :func:`solve_linear_psi` -- the analogous representation for the F
  filtration.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .ensemble import Ensemble
from .girsanov import ScenarioShift, density_path, shifted_fields
from .market import AdmissibilityError
from .regression import F, G, RegressionBasis, check_filtration

DriverFunc = Callable[..., np.ndarray]


@dataclass(frozen=True)
class DriverSpec:
    """``func(i, lamB, lamH, y, z, u) -> g`` with per-path arrays.

    ``y`` and ``z`` have shape (P,), ``u`` has shape (P, J); ``lamB`` and
    ``lamH`` are the cell-``i`` intensities. ``lipschitz`` is the declared
    constant K_g used by :func:`probe_lipschitz`.
    """

    func: DriverFunc
    lipschitz: float
    filtration: str = F

    def __call__(self, i, lamB, lamH, y, z, u):
        return self.func(i, lamB, lamH, y, z, u)


def zero_driver(filtration: str = F) -> DriverSpec:
    return DriverSpec(lambda i, lb, lh, y, z, u: np.zeros_like(y), 0.0, check_filtration(filtration))


def probe_lipschitz(driver: DriverSpec, ensemble: Ensemble, n_nodes: int = 8, seed: int = 0, scale: float = 10.0) -> dict:
    """Randomized check of the standard-parameter Lipschitz bound.

    At a few random nodes, draws one argument pair per path and reports the
    largest ratio ``|g1 - g2| / (|dy| + sqrt(lamB)|dz| + ||du||_{nu lamH})``.
    """
    rng = np.random.default_rng(seed)
    p, n = ensemble.n_paths, ensemble.grid.n_steps
    nu = ensemble.nu.nu
    j = nu.size
    worst = 0.0
    for i in rng.choice(n, size=min(n_nodes, n), replace=False):
        lb = ensemble.intensity.cell_B[:, i]
        lh = ensemble.intensity.cell_H[:, i]
        y1, y2 = rng.normal(0, scale, (2, p))
        z1, z2 = rng.normal(0, scale, (2, p))
        u1, u2 = rng.normal(0, scale, (2, p, j))
        g1 = np.broadcast_to(driver(i, lb, lh, y1, z1, u1), (p,))
        g2 = np.broadcast_to(driver(i, lb, lh, y2, z2, u2), (p,))
        dist = np.abs(y1 - y2) + np.sqrt(lb) * np.abs(z1 - z2) + np.sqrt(np.sum((u1 - u2) ** 2 * nu * lh[:, None], axis=1))
        ratio = np.abs(g1 - g2) / np.maximum(dist, 1e-300)
        worst = max(worst, float(ratio.max()))
    return {"declared": driver.lipschitz, "observed_max_ratio": worst, "ok": worst <= driver.lipschitz * (1 + 1e-9) + 1e-12}


@dataclass
class BSDESolution:
    """Grid solution.

    ``y``: (P, N + 1); ``z``: (P, N); ``u``: (P, N, J);
    ``n_increments``: orthogonal remainder per cell (zero in the G case);
    ``residual``: per-cell balance ``Y_{i+1} - y_i - z dB - u dH + g dt``,
    which in the G case is the discretization/regression residual;
    ``y_se``: regression standard error of the conditional expectation.
    """

    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    n_increments: np.ndarray
    residual: np.ndarray
    y_se: np.ndarray
    driver_values: np.ndarray
    filtration: str
    diagnostics: list = field(default_factory=list)

    @property
    def terminal_residual(self) -> float:
        return 0.0  # y_N is set to xi, not estimated

    @property
    def y0(self) -> float:
        return float(np.mean(self.y[:, 0]))

    def diagnostics_to_csv(self, fh) -> None:
        cols = ["node", "n_features", "condition", "rss", "y_mean", "y_se_mean", "z_mean", "residual_rms"]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for d in self.diagnostics:
            w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in cols])


def solve_backward_regression(
    driver: DriverSpec,
    terminal: np.ndarray,
    ensemble: Ensemble,
    basis: RegressionBasis,
    scenario: Optional[ScenarioShift] = None,
    picard: int = 1,
    estimator: str = "realized",
    scheme: str = "one-step",
) -> BSDESolution:
    """Least-squares backward induction.

    At each node ``i`` (from ``N - 1`` down to 0), with ``w`` the one-step
    density ratio of the scenario (1 without a scenario):

    * ``y_hat = proj(w Y_{i+1})``;
    * ``z = proj(w (Y_{i+1} - y_hat) dB^theta) / (lambda_B dt)``;
    * ``u_j = proj(w (Y_{i+1} - y_hat) dH^theta_j) / ((1 + theta_H_j) nu_j lambda_H dt)``;
    * ``y = y_hat + g(y_hat + g(y_hat) dt) dt`` (``picard`` refinements).

    That is the ``estimator="expected"`` form. The default
    ``estimator="realized"`` instead regresses ``Y_{i+1} - y_hat`` on the
    features multiplied by the realized increment, i.e. it solves the
    weighted normal equations with ``sum phi phi' w dB^2`` in place of
    ``sum phi phi' lambda_B dt``. Both target the same conditional moment,
    but the realized form cancels the chi-square noise of ``dB^2`` and is
    far less noisy on fine grids.

    With ``scheme="multistep"`` the regression target ``Y_{i+1}`` (a fitted
    value) is replaced by the pathwise quantity
    ``xi + sum_{k>i} (g_k dt - z_k dB_k - sum_j u_kj dH_kj)`` and the one-step
    weight by ``Z_T / Z_i``. Its conditional expectation given node ``i+1``
    is the same, but fitting errors no longer compound across nodes, which
    matters on fine grids.

    Subtracting ``y_hat`` before the integrand regressions is a control
    variate; it does not change the limit. Integrands are set to 0 where the
    corresponding intensity vanishes.
    """
    if scheme not in ("multistep", "one-step"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if estimator not in ("realized", "expected"):
        raise ValueError(f"unknown integrand estimator {estimator!r}")
    filtration = check_filtration(driver.filtration)
    noise = ensemble.noise
    p, n, j = noise.counts.shape
    dt = ensemble.grid.dt
    xi = np.asarray(terminal, dtype=float)
    if xi.shape != (p,):
        raise ValueError(f"terminal has shape {xi.shape}, expected {(p,)}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("terminal value is not finite")
    m2 = float(np.mean(xi**2))
    if m2 > 1e12 * max(1.0, float(np.mean(np.abs(xi))) ** 2):
        warnings.warn("terminal second moment looks unbounded", RuntimeWarning)

    if scenario is None:
        dB, dH = noise.dB, noise.compensated_jumps
        weights = None
        log_z = None
        tilt_H = np.ones((1, 1, j))
    else:
        dB, dH = shifted_fields(scenario, noise)
        dens = density_path(scenario, noise)
        weights = dens.one_step
        log_z = dens.log_z
        _, tilt_H = scenario.fields(noise)
        tilt_H = 1.0 + tilt_H
    lamB = noise.intensity.cell_B
    lamH = noise.intensity.cell_H
    var_B = lamB * dt
    var_H = np.broadcast_to(tilt_H * noise.jump_compensator, (p, n, j))

    y = np.empty((p, n + 1))
    y_se = np.zeros((p, n + 1))
    z = np.zeros((p, n))
    u = np.zeros((p, n, j))
    gvals = np.zeros((p, n))
    resid = np.zeros((p, n))
    diags = []
    y[:, n] = xi
    tail = xi.copy()  # multistep target, see the docstring
    for i in range(n - 1, -1, -1):
        proj = basis.projector(i)
        w = 1.0 if weights is None else weights[:, i]
        nxt = y[:, i + 1]
        if scheme == "multistep":
            w = 1.0 if log_z is None else np.exp(log_z[:, -1] - log_z[:, i])
            y_hat, se = proj.fit_with_se(w * tail)
            dev = w * (tail - y_hat)
        else:
            y_hat, se = proj.fit_with_se(w * nxt)
            dev = w * (nxt - y_hat)
        if estimator == "realized":
            z_i = _realized_fit(proj, dev, dB[:, i], w, var_B[:, i] > 0)
            u_i = np.column_stack(
                [_realized_fit(proj, dev, dH[:, i, k], w, var_H[:, i, k] > 0) for k in range(j)]
            ) if j else np.zeros((p, 0))
        else:
            targets = np.column_stack([dev * dB[:, i]] + [dev * dH[:, i, k] for k in range(j)])
            fitted = proj.fit(targets)
            vb = var_B[:, i]
            z_i = np.divide(fitted[:, 0], vb, out=np.zeros(p), where=vb > 0)
            vh = var_H[:, i, :]
            u_i = np.divide(fitted[:, 1:], vh, out=np.zeros((p, j)), where=vh > 0)
        lb, lh = lamB[:, i], lamH[:, i]
        g = np.asarray(driver(i, lb, lh, y_hat, z_i, u_i), dtype=float)
        for _ in range(picard):
            g = np.asarray(driver(i, lb, lh, y_hat + g * dt, z_i, u_i), dtype=float)
        g = np.broadcast_to(g, (p,))
        y_i = y_hat + g * dt
        tail = tail + g * dt - z_i * dB[:, i] - np.sum(u_i * dH[:, i, :], axis=1)
        y[:, i] = y_i
        y_se[:, i] = se
        z[:, i] = z_i
        u[:, i, :] = u_i
        gvals[:, i] = g
        resid[:, i] = nxt - y_i - z_i * dB[:, i] - np.sum(u_i * dH[:, i, :], axis=1) + g * dt
        diags.append(
            {
                "node": i,
                "n_features": proj.n_features,
                "condition": proj.condition,
                "rss": float(np.sum((w * nxt - y_hat) ** 2)),
                "y_mean": float(y_i.mean()),
                "y_se_mean": float(se.mean()),
                "z_mean": float(z_i.mean()),
                "residual_rms": float(np.sqrt(np.mean(resid[:, i] ** 2))),
            }
        )
    diags.reverse()
    n_inc = resid if filtration == F else np.zeros_like(resid)
    return BSDESolution(y, z, u, n_inc, resid, y_se, gvals, filtration, diags)


def _realized_fit(proj, dev, incr, w, active) -> np.ndarray:
    """Coefficient field ``c(x)`` minimizing ``sum w (dev / w - c(x) incr)^2`` over the basis span."""
    p = dev.shape[0]
    out = np.zeros(p)
    if not active.any():
        return out
    q = proj.q
    wt = np.broadcast_to(w, (p,)) * incr * incr
    m = (q * wt[:, None]).T @ q
    rhs = q.T @ (dev * incr)
    ridge = 1e-12 * max(float(np.trace(m)), 1e-300) / m.shape[0]
    coef = np.linalg.solve(m + ridge * np.eye(m.shape[0]), rhs)
    return np.where(active, q @ coef, 0.0)


def orthogonality_report(sol: BSDESolution, ensemble: Ensemble, scenario: Optional[ScenarioShift] = None) -> dict:
    """Per-node sample covariation of the remainder with dB and each dH~_j.

    Returns the largest |mean| / SE across nodes and marks (reweighted by
    the one-step density under a scenario).
    """
    noise = ensemble.noise
    if scenario is None:
        dB, dH, w = noise.dB, noise.compensated_jumps, np.ones(noise.dB.shape)
    else:
        dB, dH = shifted_fields(scenario, noise)
        w = density_path(scenario, noise).one_step
    n_inc = sol.residual
    p = n_inc.shape[0]
    worst = 0.0
    rows = []
    for i in range(n_inc.shape[1]):
        cols = [dB[:, i]] + [dH[:, i, k] for k in range(dH.shape[2])]
        for c, x in enumerate(cols):
            prod = w[:, i] * n_inc[:, i] * x
            m = prod.mean()
            se = prod.std(ddof=1) / np.sqrt(p)
            # a remainder at rounding level (relative to Y) counts as exactly zero
            if np.max(np.abs(n_inc[:, i])) <= 1e-12 * (1.0 + np.max(np.abs(sol.y[:, i + 1]))):
                zs = 0.0
            else:
                zs = abs(m) / se if se > 0 else np.inf
            worst = max(worst, zs)
            rows.append({"node": i, "field": "B" if c == 0 else f"H{c - 1}", "mean": float(m), "se": float(se)})
    return {"max_abs_z": float(worst), "entries": rows}


# -- linear equations ---------------------------------------------------------


@dataclass(frozen=True)
class LinearCoefficients:
    """Linear driver ``g = A y + C + E0 sqrt(lamB) z + sum_j E_j nu_j sqrt(lamH) u_j``.

    ``A``, ``C`` and ``E0`` broadcast to (P, N); ``E_H`` broadcasts to
    (P, N, J). Bounds: ``|A| <= K_A``, ``|E0| < K_E`` and
    ``|E_j| < K_E |z_j|`` (or the one-sided ``0 <= E_j < K_E z_j`` with
    ``one_sided=True``).
    """

    A: np.ndarray = 0.0
    C: np.ndarray = 0.0
    E0: np.ndarray = 0.0
    E_H: np.ndarray = 0.0
    K_A: float = 10.0
    K_E: float = 10.0
    one_sided: bool = False

    def fields(self, ensemble: Ensemble):
        p, n, j = ensemble.noise.counts.shape
        return (
            np.broadcast_to(np.asarray(self.A, dtype=float), (p, n)),
            np.broadcast_to(np.asarray(self.C, dtype=float), (p, n)),
            np.broadcast_to(np.asarray(self.E0, dtype=float), (p, n)),
            np.broadcast_to(np.asarray(self.E_H, dtype=float), (p, n, j)),
        )

    def check(self, ensemble: Ensemble) -> None:
        A, C, E0, EH = self.fields(ensemble)
        z = ensemble.nu.z
        if np.any(np.abs(A) > self.K_A):
            raise AdmissibilityError("|A| exceeds K_A")
        if np.any(np.abs(E0) >= self.K_E):
            raise AdmissibilityError("|E0| must be below K_E")
        if self.one_sided:
            ok = (EH >= 0) & (EH < self.K_E * z)
        else:
            ok = np.abs(EH) < self.K_E * np.abs(z)
        if not np.all(ok):
            raise AdmissibilityError("jump coefficient E_H outside its bound")

    def driver(self, ensemble: Ensemble, filtration: str = G) -> DriverSpec:
        A, C, E0, EH = self.fields(ensemble)
        nu = ensemble.nu.nu

        def g(i, lb, lh, y, z, u):
            return (
                A[:, i] * y
                + C[:, i]
                + E0[:, i] * np.sqrt(lb) * z
                + np.sum(EH[:, i, :] * nu * u, axis=1) * np.sqrt(lh)
            )

        k = float(np.max(np.abs(A)) + np.max(np.abs(E0)) + np.max(np.abs(EH)) * np.sqrt(np.sum(nu))) if A.size else 0.0
        return DriverSpec(g, k, filtration)


def gamma_process(coeffs: LinearCoefficients, ensemble: Ensemble) -> np.ndarray:
    """``log Gamma^0_t`` per node, shape (P, N + 1).

    Cell exponent: ``A dt - 1/2 E0^2 1{lamB>0} dt + (E0 / sqrt(lamB)) dB
    + sum_j [ln(1 + e_j) N_j - e_j nu_j lamH dt] 1{lamH>0}`` with
    ``e_j = E_j / sqrt(lamH)``.
    """
    coeffs.check(ensemble)
    A, _, E0, EH = coeffs.fields(ensemble)
    noise = ensemble.noise
    dt = ensemble.grid.dt
    lb = noise.intensity.cell_B
    lh = noise.intensity.cell_H
    on_B = lb > 0
    on_H = lh > 0
    sq_B = np.sqrt(np.where(on_B, lb, 1.0))
    sq_H = np.sqrt(np.where(on_H, lh, 1.0))[:, :, None]
    e = np.where(on_H[:, :, None], EH / sq_H, 0.0)
    if np.any(e <= -1.0):
        raise AdmissibilityError("E_j / sqrt(lambda_H) <= -1: jump factor of Gamma is not positive")
    inc = A * dt + np.where(on_B, -0.5 * E0**2 * dt + E0 / sq_B * noise.dB, 0.0)
    inc = inc + np.sum(np.log1p(e) * noise.counts - e * noise.jump_compensator, axis=2)
    out = np.zeros((noise.n_paths, noise.grid.n_steps + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def solve_linear_gamma(coeffs: LinearCoefficients, terminal: np.ndarray, ensemble: Ensemble, basis: RegressionBasis) -> np.ndarray:
    """``Y_i = E[xi Gamma_N / Gamma_i + sum_{k>=i} (Gamma_k / Gamma_i) C_k dt | G_i]`` by regression."""
    log_g = gamma_process(coeffs, ensemble)
    _, C, _, _ = coeffs.fields(ensemble)
    return _adjoint_expectation(log_g, C * ensemble.grid.dt, terminal, basis)


def _adjoint_expectation(log_adj: np.ndarray, source: np.ndarray, terminal: np.ndarray, basis: RegressionBasis) -> np.ndarray:
    p, n1 = log_adj.shape
    n = n1 - 1
    adj = np.exp(log_adj)
    # running sum_{k>=i} adj_k source_k, built backwards
    tail = np.zeros((p, n1))
    for k in range(n - 1, -1, -1):
        tail[:, k] = tail[:, k + 1] + adj[:, k] * source[:, k]
    xi = np.asarray(terminal, dtype=float)
    y = np.empty((p, n1))
    y[:, n] = xi
    for i in range(n):
        target = (xi * adj[:, n] + tail[:, i]) / adj[:, i]
        y[:, i] = basis.projector(i).fit(target)
    return y


@dataclass(frozen=True)
class PsiCoefficients:
    """Fields ``a``, ``b``, ``c`` on the mark space ``{0} U marks``.

    The ``*_B`` entries broadcast to (P, N), the ``*_H`` entries to (P, N, J).
    """

    a_B: np.ndarray = 0.0
    a_H: np.ndarray = 0.0
    b_B: np.ndarray = 0.0
    b_H: np.ndarray = 0.0
    c_B: np.ndarray = 0.0
    c_H: np.ndarray = 0.0

    def fields(self, ensemble: Ensemble):
        p, n, j = ensemble.noise.counts.shape
        out = []
        for name in ("a", "b", "c"):
            out.append(np.broadcast_to(np.asarray(getattr(self, name + "_B"), dtype=float), (p, n)))
            out.append(np.broadcast_to(np.asarray(getattr(self, name + "_H"), dtype=float), (p, n, j)))
        return out


def psi_driver(coeffs: PsiCoefficients, ensemble: Ensemble) -> DriverSpec:
    """Driver matching the Psi representation.

    ``g = (a_B y + b_B z + c_B) lamB + sum_j (a_H,j y + b_H,j u_j + c_H,j) nu_j lamH``.
    """
    aB, aH, bB, bH, cB, cH = coeffs.fields(ensemble)
    nu = ensemble.nu.nu

    def g(i, lb, lh, y, z, u):
        jump = np.sum((aH[:, i, :] * y[:, None] + bH[:, i, :] * u + cH[:, i, :]) * nu, axis=1)
        return (aB[:, i] * y + bB[:, i] * z + cB[:, i]) * lb + jump * lh

    lb_max = float(ensemble.intensity.lambda_B.max())
    lh_max = float(ensemble.intensity.lambda_H.max())
    k = (np.max(np.abs(aB)) * lb_max + np.max(np.abs(aH)) * np.sum(nu) * lh_max
         + np.max(np.abs(bB)) * np.sqrt(lb_max) + np.max(np.abs(bH)) * np.sqrt(np.sum(nu) * lh_max))
    return DriverSpec(g, float(k), F)


def psi_process(coeffs: PsiCoefficients, ensemble: Ensemble) -> np.ndarray:
    """``log Psi`` per node: ``sum a d<mu>`` plus the log of the Doleans product of ``int b dmu``."""
    aB, aH, bB, bH, _, _ = coeffs.fields(ensemble)
    if np.any(bH <= -1.0):
        raise AdmissibilityError("jump coefficient b_H <= -1: Doleans factor is not positive")
    noise = ensemble.noise
    dt = ensemble.grid.dt
    lb = noise.intensity.cell_B
    comp = noise.jump_compensator
    inc = aB * lb * dt + np.sum(aH * comp, axis=2)
    inc = inc + bB * noise.dB - 0.5 * bB**2 * lb * dt
    inc = inc + np.sum(np.log1p(bH) * noise.counts - bH * comp, axis=2)
    out = np.zeros((noise.n_paths, noise.grid.n_steps + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def solve_linear_psi(coeffs: PsiCoefficients, terminal: np.ndarray, ensemble: Ensemble, basis: RegressionBasis) -> np.ndarray:
    """``Y_i = E[xi Psi_N / Psi_i + sum_{k>=i} (Psi_k / Psi_i) c d<mu>_k | F_i]``."""
    _, _, _, _, cB, cH = coeffs.fields(ensemble)
    noise = ensemble.noise
    source = cB * noise.intensity.cell_B * ensemble.grid.dt + np.sum(cH * noise.jump_compensator, axis=2)
    return _adjoint_expectation(psi_process(coeffs, ensemble), source, terminal, basis)


# -- comparison ---------------------------------------------------------------


def comparison_harness(
    params1: tuple[DriverSpec, np.ndarray],
    params2: tuple[DriverSpec, np.ndarray],
    ensemble: Ensemble,
    basis: RegressionBasis,
    tol: Optional[float] = None,
    n_sigma: float = 3.0,
    n_probe: int = 64,
    seed: int = 0,
) -> dict:
    """Statistical check that ordered inputs give ordered solutions.

    Hypotheses checked first: ``xi1 <= xi2`` on every path and
    ``g1 <= g2`` on random arguments at every node. When they fail the
    report status is ``"hypotheses not satisfied"`` and nothing is solved.
    Otherwise both equations are solved on the shared ensemble and
    violations ``y1 > y2 + tol`` are counted over all (path, node) pairs;
    without an explicit ``tol`` it is ``n_sigma`` times the combined
    regression standard error at each pair.
    """
    (g1, xi1), (g2, xi2) = params1, params2
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    if np.any(xi1 > xi2):
        return {"status": "hypotheses not satisfied", "reason": "terminal values are not ordered"}
    rng = np.random.default_rng(seed)
    p, n = ensemble.n_paths, ensemble.grid.n_steps
    j = ensemble.nu.n_marks
    for i in range(n):
        lb = ensemble.intensity.cell_B[:, i]
        lh = ensemble.intensity.cell_H[:, i]
        for _ in range(max(1, n_probe // n)):
            y = rng.normal(0, 10, p)
            z = rng.normal(0, 10, p)
            u = rng.normal(0, 10, (p, j))
            if np.any(np.asarray(g1(i, lb, lh, y, z, u)) > np.asarray(g2(i, lb, lh, y, z, u)) + 1e-12):
                return {"status": "hypotheses not satisfied", "reason": f"drivers are not ordered at node {i}"}
    s1 = solve_backward_regression(g1, xi1, ensemble, basis)
    s2 = s1 if (g1 is g2 and np.array_equal(xi1, xi2)) else solve_backward_regression(g2, xi2, ensemble, basis)
    if tol is None:
        thr = n_sigma * np.sqrt(s1.y_se**2 + s2.y_se**2)
    else:
        thr = np.full(s1.y.shape, float(tol))
    excess = s1.y - s2.y - thr
    viol = excess > 0
    return {
        "status": "ok",
        "violations": int(viol.sum()),
        "fraction": float(viol.mean()),
        "max_excess": float(excess.max()),
        "mean_gap": float(np.mean(s2.y[:, 0] - s1.y[:, 0])),
        "solutions": (s1, s2),
    }
