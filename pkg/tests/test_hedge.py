import io
import json

import numpy as np
import pytest

from tchedge.girsanov import ScenarioShift
from tchedge.hedge import (
    Claim,
    NoScenarioError,
    drift_residual,
    dump_json,
    hedge_claim,
    node_rows,
    optimal_portfolio,
    risk_measure,
    scenario_family,
    solve_market_price_equation,
    summary,
    verify_saddle,
    write_node_csv,
)
from tchedge.market import AdmissibilityError
from tchedge.regression import F, G, markov_basis

from helpers import small_ensemble

ENS = small_ensemble(n_paths=6000, n_steps=8)


@pytest.mark.parametrize("kind", ["call", "put", "digital"])
def test_claim_payoffs_nonnegative(kind):
    v = Claim(kind, {"strike": 100.0}).payoff(ENS)
    assert v.shape == (ENS.n_paths,) and np.all(v >= 0)


def test_put_call_parity_on_paths():
    c = Claim("call", {"strike": 95.0}).payoff(ENS)
    p = Claim("put", {"strike": 95.0}).payoff(ENS)
    np.testing.assert_allclose(c - p, ENS.market.s1[:, -1] - 95.0)


def test_unknown_claim():
    with pytest.raises(ValueError):
        Claim("barrier").payoff(ENS)


def test_minimal_norm_scenario_solves_drift_equation():
    wc = solve_market_price_equation(ENS)
    assert wc.max_residual < 1e-12
    assert np.all(wc.theta.theta_B < 0)  # alpha > r lowers the Gaussian drift


def test_alpha_equal_r_gives_zero_shift():
    ens = small_ensemble(n_paths=500, n_steps=4, alpha=0.03)
    wc = solve_market_price_equation(ens)
    assert np.all(wc.theta.theta_B == 0) and np.all(wc.theta.theta_H == 0)


def test_no_scenario_when_market_has_no_noise():
    ens = small_ensemble(n_paths=50, n_steps=4, gamma=(0.0, 0.0), lam_H=0.0)
    ens.coeffs.sigma  # sigma > 0 so a scenario exists
    assert solve_market_price_equation(ens).max_residual < 1e-12
    ens0 = small_ensemble(n_paths=50, n_steps=4, gamma=(0.0, 0.0))
    object.__setattr__(ens0.coeffs, "sigma", np.zeros_like(ens0.coeffs.sigma))
    with pytest.raises(NoScenarioError, match="no admissible scenario"):
        solve_market_price_equation(ens0)


def test_user_supplied_scenario_validated():
    wc = solve_market_price_equation(ENS)
    again = solve_market_price_equation(ENS, "user-supplied", wc.theta)
    assert again.max_residual < 1e-12
    with pytest.raises(NoScenarioError, match="misses the drift equation"):
        solve_market_price_equation(ENS, "user-supplied", ScenarioShift.constant(0.0, [0.0, 0.0]))


def test_portfolio_matches_complete_market_integrands():
    ens = small_ensemble(n_paths=100, n_steps=4, gamma=(0.0, 0.0))
    z = np.random.default_rng(0).normal(size=(100, 4))
    pf = optimal_portfolio(z, np.zeros((100, 4, 2)), ens)
    np.testing.assert_allclose(pf.pi * 0.2, ens.market.s0[:, :-1] * z)
    assert np.allclose(pf.residual_B, 0.0)


@pytest.mark.parametrize("filtration", [F, G])
def test_hedge_pipeline_invariants(filtration):
    res = hedge_claim(ENS, Claim("call", {"strike": 100.0}), filtration)
    np.testing.assert_array_equal(res.y_hat[:, -1], res.claim)
    np.testing.assert_allclose(res.cost[:, 1:], (res.y_hat - res.wealth)[:, 1:], atol=1e-12)
    if filtration == F:
        assert np.all(np.abs(res.cost[:, 0]) < 1e-9)
    else:
        np.testing.assert_allclose(res.cost[:, 0], res.y_hat[:, 0] - res.v)
    assert 5.0 < res.v < 15.0


def test_hedge_errors_carry_stage():
    with pytest.raises(KeyError):
        hedge_claim(ENS, Claim("call", {}), F)
    with pytest.raises(NoScenarioError, match=r"^\[scenario\]"):
        hedge_claim(ENS, Claim("call", {"strike": 100.0}), F, rule="user-supplied", theta=ScenarioShift.zero())


def test_saddle_in_complete_market():
    ens = small_ensemble(n_paths=6000, n_steps=8, gamma=(0.0, 0.0), lam_H=0.0)
    res = hedge_claim(ens, Claim("call", {"strike": 100.0}), G)
    sad = verify_saddle(res, ens)
    assert sad["matching_exact"] and sad["driver_ok"] and sad["value_ok"]


def test_risk_measure_identities():
    res = hedge_claim(ENS, Claim("call", {"strike": 100.0}), F)
    fam = scenario_family(res.scenario, (0.0, 1.0), (0.2,))
    x = ENS.discount[:, -1] * (res.wealth[:, -1] - res.claim)
    rho = float(risk_measure(x, fam, ENS).value)
    assert float(risk_measure(2 * x, fam, ENS).value) == pytest.approx(2 * rho, rel=1e-12)
    assert float(risk_measure(x + 1.0, fam, ENS).value) == pytest.approx(rho - 1.0, rel=1e-12)
    # the family contains P (scale 0), so rho bounds the P-expected loss
    assert rho >= -x.mean() - 1e-12
    later = risk_measure(x, fam, ENS, t_index=4)
    assert later.value.shape == (ENS.n_paths,)
    with pytest.raises(ValueError):
        risk_measure(x, [], ENS)


def test_exports_are_deterministic():
    res = hedge_claim(ENS, Claim("call", {"strike": 100.0}), F)
    a, b = io.StringIO(), io.StringIO()
    write_node_csv(res, ENS, a)
    write_node_csv(res, ENS, b)
    assert a.getvalue() == b.getvalue()
    assert len(node_rows(res, ENS)) == 9
    buf = io.StringIO()
    dump_json(summary(res, ENS), buf)
    data = json.loads(buf.getvalue())
    assert data["filtration"] == "F" and data["drift_residual_max"] < 1e-12


def test_incomplete_market_flags_least_squares():
    res = hedge_claim(ENS, Claim("call", {"strike": 100.0}), G)
    sad = verify_saddle(res, ENS)
    assert not sad["matching_exact"]
    assert sad["driver_pi_violation"] < 1e-10
