"""Acceptance criteria 1-11 at desk scale.

Each test records one PASS/FAIL line (see conftest) and then asserts, so a
red criterion shows up both in the summary section and as a failed test.
"""

import filecmp
import time

import numpy as np
import pytest
from scipy.stats import norm

from tchedge.bsde import DriverSpec, LinearCoefficients, comparison_harness, solve_backward_regression, solve_linear_gamma
from tchedge.cli import main
from tchedge.ensemble import simulate_ensemble
from tchedge.girsanov import ScenarioShift, density_path, reweighted_expectation, structure_check_deterministic_theta, weighted_mean
from tchedge.hedge import Claim, hedge_claim, risk_measure, scenario_family, solve_market_price_equation, verify_saddle
from tchedge.intensity import CIRIntensity, ConstantIntensity, IntensitySpec, PiecewiseIntensity, TimeGrid
from tchedge.market import MarketCoefficients
from tchedge.noise import JumpMeasureSpec, char_function_B, char_function_eta, empirical_char_function
from tchedge.regression import F, G, markov_basis
from tchedge.validation import suite_girsanov

SEED = 20240601
N_DESK = 32
P_DESK = 50_000
NU2 = JumpMeasureSpec((0.1, -0.08), (0.6, 0.4))
JUMP_MARKET = MarketCoefficients(0.03, 0.07, 0.2, [0.1, -0.08])


@pytest.fixture(scope="module")
def jump_ensemble():
    spec = IntensitySpec(CIRIntensity(2.0, 1.0, 0.3, 1.0), ConstantIntensity(1.0))
    return simulate_ensemble(TimeGrid(1.0, N_DESK), spec, NU2, JUMP_MARKET, P_DESK, SEED)


def test_criterion_01_distributional_fidelity(report):
    spec = IntensitySpec(ConstantIntensity(1.3), PiecewiseIntensity(((0.0, 0.5), (0.5, 2.0))))
    ens = simulate_ensemble(TimeGrid(1.0, N_DESK), spec, NU2, JUMP_MARKET, P_DESK, SEED)
    worst = 0.0
    for t_index in (N_DESK // 2, N_DESK):
        for c in (0.5, 1.0, 2.0):
            for comp in ("B", "eta"):
                est, se = empirical_char_function(ens.noise, c, t_index, comp, return_se=True)
                if comp == "B":
                    exact = complex(char_function_B(c, ens.intensity.cum_B[0, t_index]))
                else:
                    exact = complex(char_function_eta(c, ens.intensity.cum_H[0, t_index], NU2))
                worst = max(worst, abs(est.real - exact.real) / se.real, abs(est.imag - exact.imag) / se.imag)
    ok = worst <= 3.0
    report(1, ok, f"max |empirical - closed form| = {worst:.2f} SE (limit 3) over 12 (c, t, component) cases")
    assert ok


def test_criterion_02_density_normalization(report, jump_ensemble):
    shifts = [ScenarioShift.constant(b, [h, h]) for b, h in ((0.3, 0.0), (-0.3, 0.5), (0.3, 1.0), (-0.3, 1.0), (0.3, 0.5))]
    shifts.append(ScenarioShift.constant(-0.3, [1.0, 0.5]))
    worst, m2_max = 0.0, 0.0
    for s in shifts:
        zt = density_path(s, jump_ensemble.noise).terminal
        se = zt.std(ddof=1) / np.sqrt(zt.size)
        worst = max(worst, abs(zt.mean() - 1.0) / se)
        m2_max = max(m2_max, float(np.mean(zt**2)))
    ok = worst <= 3.0 and np.isfinite(m2_max)
    report(2, ok, f"max |mean Z_T - 1| = {worst:.2f} SE (limit 3) over 6 shifts; max E[Z_T^2] = {m2_max:.3f}")
    assert ok


def test_criterion_03_girsanov_martingality(report, jump_ensemble):
    checks = suite_girsanov(jump_ensemble)
    worst = max(abs(c.estimate) / c.se for c in checks)
    ok = all(c.passed for c in checks)
    report(3, ok, f"{len(checks)} reweighted means and covariations, max |z| = {worst:.2f} (limit 3)")
    assert ok


def test_criterion_04_corollary_structure(report):
    spec = IntensitySpec(ConstantIntensity(1.0), CIRIntensity(1.5, 2.0, 0.5, 1.5))
    nu = JumpMeasureSpec((0.1,), (1.0,))
    ens = simulate_ensemble(TimeGrid(1.0, N_DESK), spec, nu, MarketCoefficients(0.03, 0.07, 0.2, 0.1), P_DESK, SEED)
    rep = structure_check_deterministic_theta(ScenarioShift.constant(0.0, 1.0), ens.noise)
    m = rep["marks"][0]
    ok = abs(m["z_score"]) <= 3.0
    report(4, ok, f"reweighted jump intensity multiplier {m['intensity_multiplier']:.4f} vs 2, gap z = {m['z_score']:.2f} (limit 3)")
    assert ok


def _cross_gap(n_steps, n_paths):
    spec = IntensitySpec(CIRIntensity(2.0, 1.0, 0.3, 1.0), ConstantIntensity(1.0))
    ens = simulate_ensemble(TimeGrid(1.0, n_steps), spec, NU2, JUMP_MARKET, n_paths, SEED)
    lin = LinearCoefficients(A=-0.05, C=0.1, E0=0.2, E_H=[0.5, -0.4])
    xi = np.maximum(ens.market.s1[:, -1] / 100.0 - 0.9, 0.0)
    basis = markov_basis(ens, G)
    y_gamma = float(solve_linear_gamma(lin, xi, ens, basis)[:, 0].mean())
    y_reg = solve_backward_regression(lin.driver(ens, G), xi, ens, basis).y0
    return abs(y_gamma - y_reg) / abs(y_gamma)


def test_criterion_05_bsde_cross_solver(report):
    coarse = _cross_gap(8, 20_000)
    fine = _cross_gap(16, 100_000)
    ok = coarse <= 5e-2 and fine < coarse
    report(5, ok, f"relative y0 gap {coarse:.2e} at N=8/2e4 paths (limit 5e-2), {fine:.2e} at N=16/1e5 paths (must shrink)")
    assert ok


def test_criterion_06_comparison_harness(report, jump_ensemble):
    ens = jump_ensemble
    lin = LinearCoefficients(A=-0.05, C=0.1, E0=0.2, E_H=[0.5, -0.4])
    drv = lin.driver(ens, G)
    shifted = DriverSpec(lambda i, lb, lh, y, z, u: drv(i, lb, lh, y, z, u) + 1.0, drv.lipschitz, G)
    xi = ens.market.s1[:, -1] / 100.0
    basis = markov_basis(ens, G)
    counts = {}
    for label, p1, p2 in (("terminal+1", (drv, xi), (drv, xi + 1.0)), ("driver+1", (drv, xi), (shifted, xi))):
        rep = comparison_harness(p1, p2, ens, basis)
        counts[label] = rep["violations"] if rep["status"] == "ok" else rep["status"]
    ok = all(v == 0 for v in counts.values())
    report(6, ok, f"violations beyond 3 regression SE: {counts}")
    assert ok


def test_criterion_07_worst_case_scenario(report, jump_ensemble):
    wc = solve_market_price_equation(jump_ensemble)
    resid = wc.max_residual
    rn = weighted_mean(density_path(wc.theta, jump_ensemble.noise).terminal, jump_ensemble.market.discounted_stock[:, -1])
    rn_z = abs(rn.value - 100.0) / rn.se
    # the saddle inequalities follow when the matching equations hold exactly,
    # i.e. in the complete sub-market (no jumps in the price)
    spec = IntensitySpec(CIRIntensity(2.0, 1.0, 0.3, 1.0), ConstantIntensity(1.0))
    ens_c = simulate_ensemble(TimeGrid(1.0, N_DESK), spec, NU2, MarketCoefficients(0.03, 0.07, 0.2, 0.0), 20_000, SEED)
    res = hedge_claim(ens_c, Claim("call", {"strike": 100.0}), G, markov_basis(ens_c, G, hinges={"logS": 8}))
    sad = verify_saddle(res, ens_c)
    ok = resid <= 1e-10 and rn_z <= 3.0 and sad["driver_ok"] and sad["value_ok"]
    report(
        7,
        ok,
        f"drift residual {resid:.1e} (limit 1e-10); discounted S_T under Q-hat {rn.value:.3f} vs 100, {rn_z:.2f} SE; "
        f"saddle grid driver_ok={sad['driver_ok']} value_ok={sad['value_ok']}",
    )
    assert ok


def test_criterion_08_complete_market_replication(report):
    r, alpha, sigma, strike, n_steps, n_paths = 0.03, 0.08, 0.2, 100.0, 512, 10_000
    t0 = time.perf_counter()
    spec = IntensitySpec(ConstantIntensity(1.0), ConstantIntensity(0.0))
    ens = simulate_ensemble(TimeGrid(1.0, n_steps), spec, JumpMeasureSpec((0.1,), (1.0,)), MarketCoefficients(r, alpha, sigma, 0.0), n_paths, SEED)
    res = hedge_claim(ens, Claim("call", {"strike": strike}), F, markov_basis(ens, F, hinges={"logS": 16}))
    elapsed = time.perf_counter() - t0
    d1 = (np.log(100.0 / strike) + r + 0.5 * sigma**2) / sigma
    bs = 100.0 * norm.cdf(d1) - strike * np.exp(-r) * norm.cdf(d1 - sigma)
    y0 = float(res.y_hat[:, 0].mean())
    price_gap = abs(y0 - bs) / bs
    cost_rms = float(np.max(np.sqrt(np.mean(res.cost**2, axis=0)))) / y0
    ok = cost_rms <= 5e-2 and price_gap <= 5e-2 and elapsed <= 30.0
    report(
        8,
        ok,
        f"max_t RMS(C_t)/Y0 = {cost_rms:.3f} (limit 0.05); Y0 {y0:.4f} vs Black-Scholes {bs:.4f} "
        f"({price_gap:.2e} rel, limit 5e-2); {elapsed:.1f} s (limit 30)",
    )
    assert ok


def test_criterion_09_toy_example(report):
    r, sigma = 0.03, 0.2
    spec = IntensitySpec(CIRIntensity(2.0, 1.0, 0.5, 1.0), ConstantIntensity(1.0))
    ens = simulate_ensemble(TimeGrid(1.0, N_DESK), spec, NU2, MarketCoefficients(r, 0.07, sigma, [0.1, -0.08]), P_DESK, SEED)
    claim = Claim("intensity_exp", {"scale": 10.0, "rate": 1.0})
    xi = ens.discount[:, -1] * claim.payoff(ens)
    # scale of Z / sigma: claim spread per unit of Gaussian clock, in stock units
    scale = float(xi.std()) / np.sqrt(float(ens.intensity.cum_B[:, -1].mean())) / sigma
    pi_rms = {}
    for filt in (G, F):
        res = hedge_claim(ens, claim, filt)
        pi_rms[filt] = float(np.max(np.sqrt(np.mean(res.pi_hat**2, axis=0))))
    # res is the F-filtration result from here on
    dens = res.representation.density
    xi0 = res.xi0
    target_mean = weighted_mean(dens.terminal, xi0).value
    basis = markov_basis(ens, F)
    worst = 0.0
    for i in (0, N_DESK // 2, N_DESK):
        if i == N_DESK:
            cond = xi0
        elif i == 0:
            cond = np.full(ens.n_paths, target_mean)
        else:
            cond = reweighted_expectation(dens.terminal, xi0, basis, i, z_t=dens.z[:, i])
        expected = ens.market.s0[:, i] * (cond - target_mean)
        worst = max(worst, float(np.sqrt(np.mean((res.cost[:, i] - expected) ** 2))))
    tol = 0.05 * float(np.std(res.claim))
    limit = 1e-2 * scale
    ok = max(pi_rms.values()) <= limit and worst <= tol
    report(
        9,
        ok,
        f"max_t RMS(pi_t) G {pi_rms[G]:.3f}, F {pi_rms[F]:.3f} (limit {limit:.3f}); "
        f"F cost vs e^R(E[xi0|F_t]-E[xi0]) RMS {worst:.2e} (limit {tol:.2e})",
    )
    assert ok


def test_criterion_10_risk_coherence(report, jump_ensemble):
    ens = jump_ensemble
    res = hedge_claim(ens, Claim("call", {"strike": 100.0}), F)
    fam = scenario_family(res.scenario, (0.0, 0.5, 1.0, 1.5), (0.25,))
    dens = [density_path(t, ens.noise) for t in fam]
    disc = ens.discount[:, -1]
    x = disc * (res.wealth[:, -1] - res.claim)
    rho = float(risk_measure(x, fam, ens, densities=dens).value)
    homog = max(abs(float(risk_measure(k * x, fam, ens, densities=dens).value) - k * rho) for k in (0.5, 2.0, 7.0))
    trans = abs(float(risk_measure(x + 3.0, fam, ens, densities=dens).value) - (rho - 3.0))
    spread = abs(float(risk_measure(disc * (res.y_hat[:, -1] - res.claim), fam, ens, densities=dens).value))
    tol = 1e-12 * (1.0 + abs(rho))
    ok = homog <= 7 * tol and trans <= tol and spread == 0.0
    report(10, ok, f"homogeneity err {homog:.1e}, translation err {trans:.1e} (rounding level), hedged spread rho_0 = {spread!r}")
    assert ok


def test_criterion_11_determinism(report, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["simulate", "--paths", "300", "--seed", "7", "--out", str(out)]) == 0
        assert main(["hedge", "--paths", "2000", "--seed", "7", "--out", str(out)]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    ok = not mismatch and not errors and len(match) == len(names)
    report(11, ok, f"{len(match)}/{len(names)} output files byte-identical across two runs ({', '.join(names)})")
    assert ok
