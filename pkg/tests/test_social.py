import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from socialprofiling.dist import Beta, Uniform
from socialprofiling.errors import OutOfSupport
from socialprofiling.social import (
    SocialParams,
    benefit_derivative,
    benefit_second_derivative,
    binomial_weights,
    expected_benefit,
    expected_log_count,
    mc_benefit_oracle,
)

REFERENCE = SocialParams(100, 2.0, Uniform(40.0))

# exact values from a 40-digit summation, n=100, omega0=2, vbar=40, v=20
J_AT_20 = 3.936848994167184576
J1_AT_20 = 0.048516601625772800
J2_AT_20 = -0.002352495395669346


def test_params_validation():
    with pytest.raises(ValueError):
        SocialParams(1, 2.0, Uniform(1))
    with pytest.raises(ValueError):
        SocialParams(10, 1.0, Uniform(1))
    assert REFERENCE.top_benefit == pytest.approx(math.log(101))


def test_benefit_endpoints():
    assert expected_benefit(REFERENCE, 0.0) == pytest.approx(math.log(2.0), abs=1e-15)
    assert expected_benefit(REFERENCE, 40.0) == pytest.approx(math.log(101.0), abs=1e-15)


def test_benefit_reference_values():
    assert expected_benefit(REFERENCE, 20.0) == pytest.approx(J_AT_20, abs=1e-13)
    assert benefit_derivative(REFERENCE, 20.0) == pytest.approx(J1_AT_20, rel=1e-11)
    assert benefit_second_derivative(REFERENCE, 20.0) == pytest.approx(J2_AT_20, rel=1e-9)


def test_weights_match_scipy_binomial():
    for trials, prob in ((99, 0.5), (99, 0.01), (500, 0.9), (3, 0.0), (3, 1.0)):
        expected = stats.binom.pmf(np.arange(trials + 1), trials, prob)
        assert np.allclose(binomial_weights(trials, prob), expected, atol=1e-15)


def test_large_population_does_not_overflow():
    value = expected_log_count(9999, 0.37, 2.0)
    assert math.log(2.0) < value < math.log(10001.0)
    with pytest.warns(RuntimeWarning):
        approx = expected_log_count(20_000, 0.37, 2.0)
    assert approx == pytest.approx(math.log(20_000 * 0.37 + 2.0), rel=1e-4)


def test_mc_oracle_agrees_with_exact_sum():
    for v in (20.0, 30.0):
        mean, stderr = mc_benefit_oracle(REFERENCE, v, seed=17, draws=1_000_000)
        assert abs(mean - expected_benefit(REFERENCE, v)) < 3 * stderr


def test_mc_oracle_degenerate_endpoints():
    assert mc_benefit_oracle(REFERENCE, 0.0, 1, 1000) == (math.log(2.0), 0.0)
    mean, stderr = mc_benefit_oracle(REFERENCE, 40.0, 1, 1000)
    assert mean == pytest.approx(math.log(101.0), abs=1e-14) and stderr == 0.0
    with pytest.raises(ValueError):
        mc_benefit_oracle(REFERENCE, 1.0, 1, 999)


def test_two_user_derivative_by_hand():
    params = SocialParams(2, 2.0, Uniform(1.0))
    assert benefit_derivative(params, 0.5) == pytest.approx(math.log(3) - math.log(2), abs=1e-15)
    # a single binomial trial makes J linear in v
    assert benefit_second_derivative(params, 0.5) == 0.0


def test_derivative_at_top_closed_form():
    expected = 99 / 40.0 * (math.log(101) - math.log(100))
    assert benefit_derivative(REFERENCE, 40.0) == pytest.approx(expected, rel=1e-13)


def test_derivative_matches_finite_difference():
    h = 1e-4
    grid = np.linspace(1.0, 39.0, 39)
    for v in grid:
        numeric = (expected_benefit(REFERENCE, v + h) - expected_benefit(REFERENCE, v - h)) / (2 * h)
        assert benefit_derivative(REFERENCE, v) == pytest.approx(numeric, rel=1e-6)


def test_second_derivative_matches_finite_difference():
    h = 1e-4
    v = 20.0
    numeric = (benefit_derivative(REFERENCE, v + h) - benefit_derivative(REFERENCE, v - h)) / (2 * h)
    assert benefit_second_derivative(REFERENCE, v) == pytest.approx(numeric, rel=1e-4)
    assert benefit_second_derivative(REFERENCE, v) < 0


def test_second_derivative_at_zero_is_finite_nonpositive():
    value = benefit_second_derivative(REFERENCE, 0.0)
    assert math.isfinite(value) and value <= 0


def test_out_of_support():
    for v in (-1.0, 40.5):
        for func in (expected_benefit, benefit_derivative, benefit_second_derivative):
            with pytest.raises(OutOfSupport):
                func(REFERENCE, v)


@pytest.mark.parametrize("params", [
    REFERENCE,
    SocialParams(30, 1.5, Beta(1.0, 1.5, 40.0)),
    SocialParams(7, 3.0, Uniform(10.0)),
])
def test_shape_on_grid(params):
    grid = np.linspace(0.0, params.vbar, 200)
    values = np.array([expected_benefit(params, v) for v in grid])
    assert np.all(np.diff(values) > 0)
    assert np.max(values[2:] - 2 * values[1:-1] + values[:-2]) <= 1e-12
    assert np.all(values >= math.log(params.omega0) - 1e-15)
    assert np.all(values <= params.top_benefit + 1e-15)
    gap = math.log(params.omega0 + 1) - math.log(params.omega0)
    for v in grid[1:-1]:
        slope = benefit_derivative(params, v)
        assert 0 < slope < (params.n - 1) * params.dist.pdf(v) * gap


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 300), omega0=st.floats(1.01, 50.0), frac=st.floats(0.0, 1.0))
def test_benefit_range_property(n, omega0, frac):
    params = SocialParams(n, omega0, Uniform(25.0))
    value = expected_benefit(params, 25.0 * frac)
    assert math.log(omega0) - 1e-12 <= value <= math.log(n - 1 + omega0) + 1e-12
