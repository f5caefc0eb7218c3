import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialprofiling.dist import Beta, Uniform, monopoly_price
from socialprofiling.errors import (
    AboveThreshold,
    ConfigError,
    NoEquilibriumFound,
    NoInteriorPrice,
    OutOfSupport,
    PerfectAccuracy,
    TrivialRegime,
    UnsupportedDistribution,
    ZeroAccuracy,
)
from socialprofiling.pbe import (
    Awareness,
    Case,
    EquilibriumOutcome,
    MarketConfig,
    Regime,
    awareness_comparison,
    classify_regime,
    equilibrium_residual,
    existence_threshold,
    expected_revenue,
    expected_user_payoff,
    no_awareness_payoff,
    no_profiling_benchmark,
    no_social_network_benchmark,
    payoff_increasing_region,
    perfect_profiling_benchmark,
    posterior_revenue,
    solve_equilibrium,
    solve_pbe,
    threshold_given_price,
    threshold_sensitivity,
    uniform_price_given_threshold,
)
from socialprofiling.sim import best_response_oracle
from socialprofiling.social import benefit_derivative, expected_benefit

from conftest import APPENDIX_NORMAL, general_market, market

LOG101 = math.log(101.0)

# 40-digit reference solutions for n=100, omega0=2, vbar=40
V_STAR_07 = 33.701025959100379512
P0_STAR_07 = 27.348803047716223903
THRESHOLD_07_AT_25 = 31.246162194695879157
DELTA_HAT = 0.23075602584206297254
DELTA_TILDE = 0.52081141593323338466


def test_config_validation_and_warning():
    with pytest.raises(ConfigError):
        MarketConfig.uniform(100, 40, 1.5)
    with pytest.raises(ConfigError):
        MarketConfig.uniform(100, 40, 0.5, alpha=1.0)
    with pytest.warns(RuntimeWarning, match="all-active"):
        MarketConfig.uniform(100, 9.0, 0.5)


def test_config_round_trip_and_field_errors():
    cfg = market(0.7)
    assert MarketConfig.from_dict(cfg.to_dict()) == cfg
    assert MarketConfig.from_dict({"n": 100, "vbar": 40, "delta": 0.7}) == cfg
    with pytest.raises(ConfigError, match="market.delta"):
        MarketConfig.from_dict({"n": 100, "vbar": 40})
    with pytest.raises(ConfigError, match="market.omega0"):
        MarketConfig.from_dict({"n": 100, "vbar": 40, "delta": 0.5, "omega0": "two"})
    with pytest.raises(ConfigError, match="market.distribution"):
        MarketConfig.from_dict({"n": 100, "delta": 0.5})


def test_threshold_at_cap_boundary_is_vbar():
    cfg = market(0.7)
    assert threshold_given_price(cfg, 40.0 - LOG101 / 0.7) == 40.0
    assert threshold_given_price(cfg, 40.0) == 40.0


def test_threshold_reference_and_grid_sign_change():
    cfg = market(0.7)
    v = threshold_given_price(cfg, 25.0)
    assert v == pytest.approx(THRESHOLD_07_AT_25, abs=1e-10)
    grid = np.linspace(25.0, 40.0, 10_001)
    phi = np.array([25.0 + expected_benefit(cfg.social, g) / 0.7 - g for g in grid])
    k = np.nonzero(np.diff(np.sign(phi)))[0]
    assert len(k) == 1 and grid[k[0]] <= v <= grid[k[0] + 1]
    assert abs(v - 25.0 - expected_benefit(cfg.social, v) / 0.7) < cfg.tol


def test_threshold_requires_profiling():
    with pytest.raises(ZeroAccuracy):
        threshold_given_price(market(0.0), 10.0)


@pytest.mark.parametrize("v_star, price", [(10.0, 20.0), (24.0, 24.0), (36.0, 22.0)])
def test_uniform_price_branches(v_star, price):
    assert uniform_price_given_threshold(market(0.5), v_star) == pytest.approx(price, abs=1e-12)


@pytest.mark.parametrize("v_star", [10.0, 24.0, 30.0, 36.0, 39.9])
def test_uniform_price_is_grid_argmax_of_posterior_revenue(v_star):
    cfg = market(0.5)
    grid = np.linspace(0.0, 40.0, 100_001)
    active = v_star / 40.0
    sold = (1 - grid / 40.0) - 0.5 * np.maximum(0.0, active - grid / 40.0)
    best = grid[np.argmax(grid * sold)]
    assert abs(uniform_price_given_threshold(cfg, v_star) - best) <= grid[1] - grid[0]


def test_uniform_price_errors():
    with pytest.raises(PerfectAccuracy):
        uniform_price_given_threshold(market(1.0), 30.0)
    with pytest.raises(OutOfSupport):
        uniform_price_given_threshold(market(0.5), 41.0)


def test_general_price_is_grid_argmax():
    cfg = general_market(Beta(1.0, 1.5, 40.0), 0.6)
    v_star = 30.0
    price = uniform_price_given_threshold(cfg, v_star)
    grid = np.linspace(0.0, v_star, 100_001)
    values = [posterior_revenue(cfg, v_star, p) for p in grid]
    assert abs(price - grid[int(np.argmax(values))]) <= grid[1] - grid[0]


def test_general_price_missing_reports_existence_threshold():
    cfg = general_market(APPENDIX_NORMAL, 0.5)
    v_check = existence_threshold(cfg)
    with pytest.raises(NoInteriorPrice) as info:
        uniform_price_given_threshold(cfg, v_check - 5.0)
    assert info.value.v_check == pytest.approx(v_check)


def test_case_one_example():
    out = solve_pbe(market(0.2))
    assert out.case is Case.ALL_ACTIVE
    assert (out.v_star, out.p0_star) == (40.0, 20.0)


def test_case_two_reference():
    out = solve_pbe(market(0.7))
    assert out.case is Case.PARTIALLY_ACTIVE
    assert out.v_star == pytest.approx(V_STAR_07, abs=1e-10)
    assert out.p0_star == pytest.approx(P0_STAR_07, abs=1e-10)
    assert out.residual < 1e-10
    assert out.p0_star > 20.0


def test_case_two_matches_best_response_dynamics():
    cfg = market(0.7)
    out = solve_pbe(cfg)
    limit = best_response_oracle(cfg, out.p0_star, grid=400_001)
    assert abs(limit - out.v_star) < 1e-4


def test_case_boundary_is_all_active():
    delta = 2 * LOG101 / 40.0
    out = solve_pbe(market(delta))
    assert out.case is Case.ALL_ACTIVE and out.v_star == 40.0 and out.p0_star == 20.0
    nearby = solve_pbe(market(delta * (1 + 1e-9)))
    assert nearby.v_star == pytest.approx(40.0, abs=1e-5)
    assert nearby.p0_star == pytest.approx(20.0, abs=1e-5)


def test_solver_rejects_benchmark_accuracies():
    with pytest.raises(ZeroAccuracy):
        solve_pbe(market(0.0))
    with pytest.raises(PerfectAccuracy):
        solve_pbe(market(1.0))
    assert solve_equilibrium(market(0.0)).case is Case.NO_PROFILING
    assert solve_equilibrium(market(1.0)).case is Case.PERFECT_PROFILING


def test_no_profiling_benchmark():
    out = no_profiling_benchmark(market(0.6))
    assert (out.v_star, out.p0_star, out.case) == (40.0, 20.0, Case.NO_PROFILING)
    assert no_profiling_benchmark(market(0.6, vbar=1.0)).p0_star == 0.5
    tn = no_profiling_benchmark(general_market(APPENDIX_NORMAL, 0.3))
    grid = np.linspace(20, 100, 100_001)
    best = grid[np.argmax(grid * (1 - APPENDIX_NORMAL.cdf(grid)))]
    assert abs(tn.p0_star - best) <= grid[1] - grid[0]
    assert tn.expected_revenue_profiled == 0.0


def test_perfect_profiling_benchmark():
    out = perfect_profiling_benchmark(market(1.0))
    assert out.p0_star == pytest.approx(40.0 - LOG101, abs=1e-12)
    assert out.p0_star == pytest.approx(35.3849, abs=1e-4)
    assert out.expected_revenue_nonprofiled == 0.0
    assert out.expected_revenue_profiled == pytest.approx(100 * 40.0 / 2, rel=1e-12)
    small = perfect_profiling_benchmark(market(1.0, n=2, vbar=10.0))
    assert small.p0_star == pytest.approx(10.0 - math.log(3.0), abs=1e-12)


def test_expected_revenue_components():
    assert expected_revenue(solve_equilibrium(market(0.0)), market(0.0))[0] == 0.0
    cfg = market(0.7)
    out = solve_pbe(cfg)
    profiled, nonprofiled = expected_revenue(out, cfg)
    assert profiled == pytest.approx(100 * 0.7 * out.v_star ** 2 / 80.0, rel=1e-12)
    p = out.p0_star
    closed = 100 * (1 - 0.7 * out.v_star / 40) * p * (
        1 - 0.3 * (p / 40) / (1 - 0.7 * out.v_star / 40))
    assert nonprofiled == pytest.approx(closed, rel=1e-12)


def test_regime_classification():
    info = classify_regime(market(0.1))
    assert info.delta_hat == pytest.approx(DELTA_HAT, abs=1e-14)
    assert info.delta_tilde == pytest.approx(DELTA_TILDE, abs=1e-9)
    assert 0 < info.delta_hat < info.delta_tilde < 1
    assert info.regime is Regime.I
    assert classify_regime(market(0.4)).regime is Regime.II
    assert classify_regime(market(0.99)).regime is Regime.III
    with pytest.raises(TrivialRegime):
        classify_regime(market(0.5, vbar=9.0))


def test_sensitivity_sign_matches_regime():
    assert threshold_sensitivity(market(0.4)) < 0
    assert threshold_sensitivity(market(0.99)) > 0


def test_delta_sweep_shape():
    deltas = np.linspace(0.01, 0.99, 100)
    outs = [solve_pbe(market(d)) for d in deltas]
    v = np.array([o.v_star for o in outs])
    p = np.array([o.p0_star for o in outs])
    flat = deltas <= DELTA_HAT
    assert np.all(np.abs(v[flat] - 40.0) < 1e-9)
    steps = np.diff(v[~flat])
    turn = int(np.argmin(v))
    assert np.all(np.diff(v[flat.sum() - 1:turn + 1]) < 0)
    assert np.all(np.diff(v[turn:]) > 0)
    assert np.count_nonzero(np.diff(np.sign(steps))) == 1
    assert np.all(np.diff(p) >= -1e-12)


def test_partially_active_invariants():
    for delta in np.linspace(0.25, 0.98, 30):
        cfg = market(delta)
        out = solve_pbe(cfg)
        assert out.case is Case.PARTIALLY_ACTIVE
        assert 0 <= out.p0_star < out.v_star <= 40.0
        assert out.residual < cfg.tol
        assert abs(out.v_star - out.p0_star - expected_benefit(cfg.social, out.v_star) / delta) < cfg.tol
        assert abs(out.p0_star - (40 - delta * out.v_star) / (2 * (1 - delta))) < cfg.tol
        assert benefit_derivative(cfg.social, out.v_star) < delta


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 400), vbar=st.floats(12.0, 400.0), frac=st.floats(0.02, 0.98),
       omega0=st.floats(1.1, 6.0))
def test_case_two_fixed_point_property(n, vbar, frac, omega0):
    cfg = market(0.5, n=n, vbar=vbar, omega0=omega0)
    if not cfg.nontrivial:
        return
    delta_hat = 2 * cfg.top_benefit / vbar
    delta = delta_hat + frac * (1 - delta_hat)
    cfg = cfg.with_delta(delta)
    out = solve_pbe(cfg)
    if out.case is not Case.PARTIALLY_ACTIVE:
        return
    assert abs(out.v_star - out.p0_star - expected_benefit(cfg.social, out.v_star) / delta) < 1e-8
    assert abs(out.p0_star - (vbar - delta * out.v_star) / (2 * (1 - delta))) < 1e-8


def test_user_payoff_branches_and_continuity():
    cfg = market(0.7)
    out = solve_pbe(cfg)
    social = expected_benefit(cfg.social, out.v_star)
    assert expected_user_payoff(out, cfg, 0.0) == pytest.approx(social, abs=1e-15)
    for point in (out.p0_star, out.v_star):
        left = expected_user_payoff(out, cfg, point - 1e-10)
        right = expected_user_payoff(out, cfg, point + 1e-10)
        assert abs(left - right) < 1e-9
    one = market(0.2)
    top = expected_user_payoff(solve_pbe(one), one, 40.0)
    assert top == pytest.approx(LOG101 + 0.8 * 20.0, abs=1e-12)
    with pytest.raises(OutOfSupport):
        expected_user_payoff(out, cfg, 41.0)


def test_awareness_examples():
    for v in (0.0, 10.0, 39.0):
        assert awareness_comparison(market(0.1), v)[0] is Awareness.EQUAL
        assert awareness_comparison(market(1.0), v)[0] is Awareness.EQUAL
    status, v_dagger = awareness_comparison(market(0.7), 5.0)
    assert status is Awareness.WORSE_AWARE and v_dagger > 5.0
    with pytest.raises(UnsupportedDistribution):
        awareness_comparison(general_market(Beta(1, 1.5, 40), 0.7), 5.0)


def test_awareness_matches_payoff_difference():
    cfg = market(0.7)
    out = solve_pbe(cfg)
    for v in np.linspace(0.0, 40.0, 201):
        status, _ = awareness_comparison(cfg, v)
        gap = expected_user_payoff(out, cfg, v) - no_awareness_payoff(cfg, v)
        if abs(gap) < 1e-9:
            continue
        assert status is (Awareness.WORSE_AWARE if gap < 0 else Awareness.BETTER_AWARE)


def test_no_social_network_benchmark():
    cfg = market(0.7)
    out = no_social_network_benchmark(cfg)
    assert (out.v_star, out.p0_star) == (20.0, 20.0)
    assert out.v_star < solve_pbe(cfg).v_star
    assert {no_social_network_benchmark(market(d)).v_star for d in (0.6, 0.8, 0.95)} == {20.0}
    with pytest.raises(UnsupportedDistribution):
        no_social_network_benchmark(general_market(Beta(1, 1.5, 40), 0.7))


def test_payoff_increasing_region():
    cfg = market(0.5)
    region = payoff_increasing_region(cfg, 0.0)
    assert region.v_hat == pytest.approx(40 - LOG101, abs=1e-12)
    assert region.v_hat == pytest.approx(35.385, abs=1e-3)
    assert region.delta_dagger == pytest.approx(DELTA_TILDE, abs=1e-9)
    near = payoff_increasing_region(cfg, region.v_hat - 1e-3)
    assert near.delta_dagger > 0.99
    with pytest.raises(AboveThreshold):
        payoff_increasing_region(cfg, region.v_hat)


@pytest.mark.parametrize("v_i", [0.0, 10.0, 25.0, 30.0, 33.0])
def test_payoff_non_decreasing_beyond_delta_dagger(v_i):
    cfg = market(0.5)
    start = payoff_increasing_region(cfg, v_i).delta_dagger
    grid = np.linspace(start, 0.999, 40)[1:]
    payoffs = [expected_user_payoff(solve_pbe(cfg.with_delta(d)), cfg.with_delta(d), v_i)
               for d in grid]
    assert np.all(np.diff(payoffs) >= -1e-9)


def test_outcome_round_trip():
    out = solve_pbe(market(0.7))
    assert EquilibriumOutcome.from_dict(out.to_dict()) == out
    assert equilibrium_residual(market(0.7), out.v_star, out.p0_star) < 1e-10


def test_beta_equilibrium_residuals():
    for delta in (0.3, 0.5, 0.7, 0.85):
        cfg = general_market(Beta(1.0, 1.5, 40.0), delta)
        out = solve_pbe(cfg)
        assert out.residual < 1e-8
        assert equilibrium_residual(cfg, out.v_star, out.p0_star) < 1e-8


def test_truncated_normal_never_silently_wrong():
    for delta in np.linspace(0.05, 0.95, 19):
        cfg = general_market(APPENDIX_NORMAL, float(delta))
        try:
            out = solve_pbe(cfg)
        except NoEquilibriumFound as exc:
            assert "v_check" in exc.diagnostics
            continue
        assert equilibrium_residual(cfg, out.v_star, out.p0_star) < 1e-8
