import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tchedge.intensity import (
    CIRIntensity,
    ConstantIntensity,
    IntensitySpec,
    PiecewiseIntensity,
    TimeGrid,
    intensity_model,
    lambda_measure,
    simulate_intensity,
)
from tchedge.noise import JumpMeasureSpec
from tchedge.streams import PathStreams


def test_streams_prefix_stable():
    # the first paths do not depend on how many paths are requested
    a = PathStreams(5, 300, block_size=64).normal("x", (4,))
    b = PathStreams(5, 1000, block_size=64).normal("x", (4,))
    np.testing.assert_array_equal(a, b[:300])


def test_streams_tags_independent():
    s = PathStreams(5, 100)
    assert not np.array_equal(s.normal("a", (3,)), s.normal("b", (3,)))


def test_poisson_zero_mean_gives_zero():
    s = PathStreams(1, 50)
    assert np.all(s.poisson("p", np.zeros((50, 3))) == 0)


@pytest.mark.parametrize("bad", [(0.0, 4), (1.0, 0), (-1.0, 3), (1.0, 2.5)])
def test_grid_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        TimeGrid(*bad)


def test_grid_index_of():
    g = TimeGrid(2.0, 8)
    assert g.index_of(1.0) == 4
    assert g.nodes[-1] == 2.0
    with pytest.raises(ValueError):
        g.index_of(0.3)


def test_piecewise_rates_right_continuous():
    m = PiecewiseIntensity(((0.0, 1.0), (0.5, 3.0)))
    rates = np.ravel(m.rates(TimeGrid(1.0, 4)))
    np.testing.assert_allclose(rates, [1.0, 1.0, 3.0, 3.0, 3.0])


def test_piecewise_validation():
    with pytest.raises(ValueError):
        PiecewiseIntensity(((0.1, 1.0),))
    with pytest.raises(ValueError):
        PiecewiseIntensity(((0.0, 1.0), (0.0, 2.0)))


def test_cir_nonnegative_and_mean():
    grid = TimeGrid(1.0, 50)
    m = CIRIntensity(3.0, 0.5, 1.5, 0.2)
    spec = IntensitySpec(m, ConstantIntensity(1.0))
    path = simulate_intensity(spec, grid, PathStreams(2, 20000))
    assert np.all(path.lambda_B >= 0)
    # full truncation has an O(dt) bias; compare loosely with the exact mean
    np.testing.assert_allclose(path.lambda_B[:, -1].mean(), m.mean_path(1.0), rtol=0.05)


def test_cum_is_left_point_sum():
    grid = TimeGrid(1.0, 4)
    path = simulate_intensity(
        IntensitySpec(PiecewiseIntensity(((0.0, 1.0), (0.5, 3.0))), ConstantIntensity(2.0)), grid, PathStreams(0, 2)
    )
    np.testing.assert_allclose(path.cum_B[0], [0, 0.25, 0.5, 1.25, 2.0])
    np.testing.assert_allclose(path.cum_H[0, -1], 2.0)


def test_intensity_model_factory():
    assert isinstance(intensity_model("constant", level=2.0), ConstantIntensity)
    assert isinstance(intensity_model("piecewise", pieces=[[0.0, 1.0]]), PiecewiseIntensity)
    with pytest.raises(ValueError):
        intensity_model("gamma")


@given(
    cells=st.sets(st.integers(0, 7), max_size=8),
    other=st.sets(st.integers(0, 7), max_size=8),
)
@settings(max_examples=40, deadline=None)
def test_lambda_measure_additive_on_disjoint_cells(cells, other):
    other = other - cells
    grid = TimeGrid(1.0, 8)
    nu = JumpMeasureSpec((0.1, -0.2), (0.5, 1.5))
    path = simulate_intensity(IntensitySpec(CIRIntensity(1, 1, 0.5, 1), ConstantIntensity(2.0)), grid, PathStreams(1, 5))
    marks = [0.0, 0.1, -0.2]
    joint = lambda_measure(path, cells | other, marks, nu)
    split = lambda_measure(path, cells, marks, nu) + lambda_measure(path, other, marks, nu)
    np.testing.assert_allclose(joint, split, rtol=1e-12, atol=1e-15)
    assert np.all(joint >= 0)


def test_lambda_measure_unknown_mark():
    grid = TimeGrid(1.0, 4)
    nu = JumpMeasureSpec((0.1,), (1.0,))
    path = simulate_intensity(IntensitySpec(ConstantIntensity(1), ConstantIntensity(1)), grid, PathStreams(1, 2))
    with pytest.raises(KeyError):
        lambda_measure(path, [0], [0.3], nu)
