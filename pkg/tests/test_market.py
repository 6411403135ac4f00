import io

import numpy as np
import pytest

from tchedge.ensemble import simulate_ensemble
from tchedge.intensity import ConstantIntensity, IntensitySpec, TimeGrid
from tchedge.market import (
    AdmissibilityError,
    MarketCoefficients,
    check_portfolio_admissible,
    market_to_csv,
    simulate_wealth,
)
from tchedge.noise import JumpMeasureSpec

from helpers import NU2, small_ensemble


def test_spot_must_exceed_one():
    with pytest.raises(ValueError):
        MarketCoefficients(spot=0.5)


def test_gamma_below_minus_one_rejected():
    with pytest.raises(AdmissibilityError, match="gamma <= -1"):
        small_ensemble(n_paths=10, gamma=(0.1, -1.5))


def test_rate_bound():
    spec = IntensitySpec(ConstantIntensity(1.0), ConstantIntensity(1.0))
    with pytest.raises(AdmissibilityError):
        simulate_ensemble(TimeGrid(1.0, 4), spec, NU2, MarketCoefficients(r=2.0, gamma=[0.0, 0.0]), 10, 0)


def test_callable_coefficients():
    spec = IntensitySpec(ConstantIntensity(1.0), ConstantIntensity(1.0))
    coeffs = MarketCoefficients(0.02, lambda t, ip: 0.05 + 0.0 * t, 0.2, [0.1, -0.08])
    ens = simulate_ensemble(TimeGrid(1.0, 4), spec, NU2, coeffs, 10, 0)
    assert ens.coeffs.alpha.shape == (10, 5)


def test_discounted_stock_martingale_when_alpha_equals_r():
    ens = small_ensemble(n_paths=20000, alpha=0.03)
    d = ens.market.discounted_stock[:, -1]
    assert abs(d.mean() - 100.0) < 4 * d.std() / np.sqrt(d.size)


def test_bond_only_wealth_grows_like_bond():
    ens = small_ensemble(n_paths=50)
    v = simulate_wealth(np.zeros((50, 16)), ens.coeffs, ens.noise, 1.0)
    np.testing.assert_allclose(v, ens.market.s0, rtol=1e-13)


def test_full_stock_wealth_tracks_stock_in_continuous_limit():
    ens = small_ensemble(n_paths=200, n_steps=16, gamma=(0.0, 0.0))
    pi = lambda i, v: v  # everything in the stock
    v = simulate_wealth(pi, ens.coeffs, ens.noise, 100.0, scheme="euler")
    err = np.abs(v[:, -1] / ens.market.s1[:, -1] - 1.0)
    assert np.median(err) < 0.05


def test_unknown_wealth_scheme():
    ens = small_ensemble(n_paths=5)
    with pytest.raises(ValueError):
        simulate_wealth(0.0, ens.coeffs, ens.noise, 1.0, scheme="rk4")


def test_portfolio_admissibility_names_violation():
    ens = small_ensemble(n_paths=5)
    rep = check_portfolio_admissible(np.full((5, 16), 20.0), ens.coeffs, ens.intensity, ens.nu)
    assert not rep.admissible
    assert rep.first_violation["reason"] == "pi * gamma <= -1"
    assert rep.first_violation["mark"] == -0.08
    ok = check_portfolio_admissible(np.full((5, 16), 2.0), ens.coeffs, ens.intensity, ens.nu)
    assert ok.admissible and ok.as_dict()["integrability_sum_max"] > 0


def test_market_csv():
    ens = small_ensemble(n_paths=3, n_steps=2)
    buf = io.StringIO()
    market_to_csv(ens.market, buf, ens.grid.nodes)
    assert len(buf.getvalue().splitlines()) == 1 + 3 * 3
