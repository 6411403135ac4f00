import io

import numpy as np
import pytest

from tchedge.bsde import (
    DriverSpec,
    LinearCoefficients,
    PsiCoefficients,
    comparison_harness,
    orthogonality_report,
    probe_lipschitz,
    psi_driver,
    solve_backward_regression,
    solve_linear_gamma,
    solve_linear_psi,
    zero_driver,
)
from tchedge.market import AdmissibilityError
from tchedge.regression import F, G, markov_basis

from helpers import small_ensemble

ENS = small_ensemble(n_paths=8000, n_steps=8)


def test_constant_terminal_with_zero_driver():
    sol = solve_backward_regression(zero_driver(), np.full(ENS.n_paths, 2.5), ENS, markov_basis(ENS))
    np.testing.assert_allclose(sol.y, 2.5, atol=1e-10)
    np.testing.assert_allclose(sol.z, 0.0, atol=1e-10)
    assert orthogonality_report(sol, ENS)["max_abs_z"] == 0.0


def test_brownian_terminal_has_unit_integrand():
    sol = solve_backward_regression(zero_driver(), ENS.noise.B[:, -1], ENS, markov_basis(ENS))
    assert np.all(np.abs(sol.z.mean(axis=0) - 1.0) < 0.03)
    # few jumps per cell, so u is noisier than z
    assert np.sqrt(np.mean(sol.u**2)) < 0.15


def test_discount_driver_matches_closed_form():
    r = 0.05
    drv = DriverSpec(lambda i, lb, lh, y, z, u: -r * y, r)
    sol = solve_backward_regression(drv, np.ones(ENS.n_paths), ENS, markov_basis(ENS))
    assert sol.y0 == pytest.approx(np.exp(-r), rel=2e-3)


def test_expected_estimator_agrees_in_mean():
    xi = ENS.noise.B[:, -1] + 0.5 * ENS.noise.eta[:, -1]
    basis = markov_basis(ENS)
    a = solve_backward_regression(zero_driver(), xi, ENS, basis, estimator="realized")
    b = solve_backward_regression(zero_driver(), xi, ENS, basis, estimator="expected")
    assert abs(a.z.mean() - b.z.mean()) < 0.05
    with pytest.raises(ValueError):
        solve_backward_regression(zero_driver(), xi, ENS, basis, estimator="x")
    with pytest.raises(ValueError):
        solve_backward_regression(zero_driver(), xi, ENS, basis, scheme="x")


def test_terminal_checks():
    with pytest.raises(ValueError, match="shape"):
        solve_backward_regression(zero_driver(), np.ones(3), ENS, markov_basis(ENS))
    bad = np.ones(ENS.n_paths)
    bad[0] = np.inf
    with pytest.raises(ValueError, match="not finite"):
        solve_backward_regression(zero_driver(), bad, ENS, markov_basis(ENS))


def test_g_filtration_has_no_orthogonal_part():
    sol = solve_backward_regression(zero_driver(G), ENS.intensity.cum_B[:, -1], ENS, markov_basis(ENS, G))
    assert np.all(sol.n_increments == 0)
    assert sol.filtration == G


def test_diagnostics_csv():
    sol = solve_backward_regression(zero_driver(), ENS.noise.B[:, -1], ENS, markov_basis(ENS))
    buf = io.StringIO()
    sol.diagnostics_to_csv(buf)
    assert len(buf.getvalue().splitlines()) == 1 + 8


def test_linear_bounds_enforced():
    with pytest.raises(AdmissibilityError):
        LinearCoefficients(A=20.0).check(ENS)
    with pytest.raises(AdmissibilityError):
        LinearCoefficients(E_H=[5.0, 0.0]).check(ENS)


def test_gamma_and_regression_agree():
    lin = LinearCoefficients(A=-0.05, C=0.1, E0=0.2, E_H=[0.5, -0.4])
    xi = ENS.market.s1[:, -1] / 100.0
    basis = markov_basis(ENS, G)
    y_gamma = solve_linear_gamma(lin, xi, ENS, basis)[:, 0].mean()
    y_reg = solve_backward_regression(lin.driver(ENS, G), xi, ENS, basis).y0
    assert abs(y_gamma - y_reg) < 2e-2 * abs(y_gamma)


def test_psi_and_regression_agree():
    coeffs = PsiCoefficients(a_B=-0.05, a_H=-0.02, b_B=0.2, b_H=[0.3, -0.2], c_B=0.1, c_H=0.05)
    xi = ENS.market.s1[:, -1] / 100.0
    basis = markov_basis(ENS, F)
    y_psi = solve_linear_psi(coeffs, xi, ENS, basis)[:, 0].mean()
    y_reg = solve_backward_regression(psi_driver(coeffs, ENS), xi, ENS, basis).y0
    assert abs(y_psi - y_reg) < 1e-2 * abs(y_psi)


def test_lipschitz_probe_within_declared_constant():
    lin = LinearCoefficients(A=-0.05, C=0.1, E0=0.2, E_H=[0.5, -0.4])
    rep = probe_lipschitz(lin.driver(ENS), ENS)
    assert rep["ok"] and rep["observed_max_ratio"] > 0


def test_comparison_harness_detects_bad_ordering():
    drv = zero_driver()
    xi = ENS.noise.B[:, -1]
    rep = comparison_harness((drv, xi + 1.0), (drv, xi), ENS, markov_basis(ENS))
    assert rep["status"] == "hypotheses not satisfied"
    up = DriverSpec(lambda i, lb, lh, y, z, u: np.ones_like(y), 0.0)
    rep = comparison_harness((up, xi), (drv, xi), ENS, markov_basis(ENS))
    assert "drivers are not ordered" in rep["reason"]
    rep = comparison_harness((drv, xi), (up, xi), ENS, markov_basis(ENS))
    assert rep["status"] == "ok" and rep["violations"] == 0
    assert rep["mean_gap"] == pytest.approx(1.0, rel=1e-6)
