import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialprofiling.dist import Beta
from socialprofiling.errors import UnsupportedDistribution
from socialprofiling.fourstage import (
    FourStageCase,
    compare_models,
    mean_valuation_boundary,
    revenue_at_threshold,
    revenue_slope_at_threshold,
    solve_four_stage,
    top_slope,
    total_expected_revenue,
    unimodality_sign_changes,
    zero_price_threshold,
)
from socialprofiling.pbe import solve_pbe, threshold_given_price
from socialprofiling.social import benefit_derivative

from conftest import general_market, market

LOG101 = math.log(101.0)

# 30-digit references, n=100, omega0=2, vbar=40
V_ZERO_07 = 3.234535540784460231
V_E_05 = 35.856010167927630671
P0_E_05 = 26.841058685890281392
REVENUE_E_05 = 1384.0696536423212904
V_TILDE_05 = 14.189657059481165581


def test_zero_price_revenue():
    cfg = market(0.7)
    v_o = zero_price_threshold(cfg)
    assert v_o == pytest.approx(V_ZERO_07, abs=1e-10)
    assert total_expected_revenue(cfg, 0.0) == pytest.approx(100 * 0.7 * v_o ** 2 / 80.0,
                                                            rel=1e-12)


def test_small_delta_limit_is_monopoly_revenue():
    cfg = market(1e-9)
    assert total_expected_revenue(cfg, 20.0) == pytest.approx(100 * 40 / 4.0, rel=1e-7)


def test_revenue_requires_uniform_and_valid_price():
    with pytest.raises(UnsupportedDistribution):
        total_expected_revenue(general_market(Beta(1, 1.5, 40), 0.5), 10.0)
    with pytest.raises(ValueError):
        total_expected_revenue(market(0.5), 41.0)


def test_case_one():
    out = solve_four_stage(market(0.2))
    assert out.case is FourStageCase.I_ALL_ACTIVE_LOW
    assert (out.v_e, out.p0_e) == (40.0, 20.0)


def test_case_two():
    # at vbar=40 the top slope is non-negative only just above delta_hat
    cfg = market(0.25)
    assert top_slope(cfg) >= 0
    out = solve_four_stage(cfg)
    assert out.case is FourStageCase.II_ALL_ACTIVE_HIGH
    assert out.v_e == 40.0
    assert out.p0_e == pytest.approx(40 - LOG101 / 0.25, abs=1e-12)
    assert top_slope(market(0.3)) < 0


def test_case_three_reference():
    out = solve_four_stage(market(0.5))
    assert out.case is FourStageCase.III_PARTIALLY_ACTIVE
    assert out.v_e == pytest.approx(V_E_05, abs=1e-8)
    assert out.p0_e == pytest.approx(P0_E_05, abs=1e-8)
    assert out.total_expected_revenue == pytest.approx(REVENUE_E_05, rel=1e-12)
    assert out.v_tilde == pytest.approx(V_TILDE_05, abs=1e-9)


def test_top_slope_is_revenue_slope_at_vbar():
    for delta in (0.3, 0.5, 0.8):
        cfg = market(delta)
        assert top_slope(cfg) == pytest.approx(revenue_slope_at_threshold(cfg, 40.0), rel=1e-10)


def test_analytic_slope_matches_finite_difference():
    cfg = market(0.6)
    h = 1e-5
    for v in np.linspace(5.0, 39.0, 12):
        numeric = (revenue_at_threshold(cfg, v + h) - revenue_at_threshold(cfg, v - h)) / (2 * h)
        assert revenue_slope_at_threshold(cfg, v) == pytest.approx(numeric, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("vbar", [200.0, 1000.0, 5000.0])
def test_case_three_stationarity_for_large_vbar(vbar):
    cfg = market(0.6, vbar=vbar)
    out = solve_four_stage(cfg)
    assert out.case is FourStageCase.III_PARTIALLY_ACTIVE
    assert abs(revenue_slope_at_threshold(cfg, out.v_e)) < 1e-9 * vbar


def test_case_three_against_price_grid():
    vbar = 200.0
    cfg = market(0.6, vbar=vbar)
    out = solve_four_stage(cfg)
    prices = np.linspace(0.0, vbar, 10_001)
    revenues = [total_expected_revenue(cfg, p) for p in prices]
    best = prices[int(np.argmax(revenues))]
    assert abs(out.p0_e - best) <= prices[1] - prices[0]
    assert out.total_expected_revenue >= max(revenues) - 1e-9 * out.total_expected_revenue


def test_announced_price_induces_threshold():
    cfg = market(0.5)
    out = solve_four_stage(cfg)
    assert threshold_given_price(cfg, out.p0_e) == pytest.approx(out.v_e, abs=1e-8)


def test_v_tilde_separates_cases():
    cfg = market(0.5)
    v_tilde = mean_valuation_boundary(cfg)
    below = market(0.5, vbar=2 * v_tilde * 0.99)
    above = market(0.5, vbar=2 * v_tilde * 1.01)
    assert solve_four_stage(below).case is not FourStageCase.III_PARTIALLY_ACTIVE
    assert solve_four_stage(above).case is FourStageCase.III_PARTIALLY_ACTIVE


@pytest.mark.parametrize("delta", np.round(np.linspace(0.1, 0.9, 9), 2))
def test_unimodality_certificate(delta):
    assert unimodality_sign_changes(market(float(delta))) <= 1


def test_case_one_comparison_is_zero():
    result = compare_models(market(0.2))
    assert result.ratio_total == 0.0
    assert result.profiled_delta == 0.0 and result.nonprofiled_delta == 0.0


def test_bound_value():
    assert compare_models(market(0.5)).bound == 0.125


@pytest.mark.parametrize("delta", [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_improvement_bound_and_components(delta):
    result = compare_models(market(delta))
    assert 0 <= result.ratio_total < result.bound <= 0.125
    assert result.within_bound
    assert result.profiled_delta >= 0
    assert result.nonprofiled_delta <= 0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(5, 300), vbar=st.floats(15.0, 300.0), delta=st.floats(0.02, 0.98))
def test_dominance_property(n, vbar, delta):
    cfg = market(delta, n=n, vbar=vbar)
    three, four = solve_pbe(cfg), solve_four_stage(cfg)
    assert four.v_e >= three.v_star - 1e-9
    assert four.p0_e >= three.p0_star - 1e-9
    assert four.total_expected_revenue >= three.total_revenue * (1 - 1e-12)
