"""Monte Carlo market simulation and brute-force cross-checks.

Randomness comes from counter-based Philox streams. The key is derived from
(seed, purpose) and the counter from the run index, so a run's draws do not
depend on how many other runs are simulated or in what order. Within a run
user i takes the i-th draw of each stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import LimitsDisagree, NonConvergence, UnsupportedDistribution
from .fourstage import solve_four_stage
from .pbe import (
    MarketConfig,
    expected_revenue,
    expected_user_payoff,
    solve_equilibrium,
    solve_pbe,
)
from .social import expected_benefit

__all__ = [
    "StrategyProfile",
    "SimulationReport",
    "PairedReport",
    "BenchmarkRow",
    "VarianceComparison",
    "uniform_stream",
    "revenue_moments",
    "simulate_market",
    "simulate_paired",
    "best_response_oracle",
    "benchmark_comparison",
    "variance_comparison",
    "payoff_sweep",
]

VALUATION, PROFILING = 1, 2


def uniform_stream(seed: int, purpose: int, run: int, count: int) -> np.ndarray:
    """The first ``count`` uniforms of stream (seed, purpose, run)."""
    key = np.random.SeedSequence([int(seed), int(purpose)]).generate_state(2, dtype=np.uint64)
    bits = np.random.Philox(key=key, counter=[0, int(run), 0, 0])
    return np.random.Generator(bits).random(count)


class Rule(str, Enum):
    THRESHOLD = "ThresholdRule"
    EXPLICIT = "ExplicitLevels"


@dataclass(frozen=True)
class StrategyProfile:
    rule: Rule
    v_star: float | None = None
    levels: tuple | None = None

    def __post_init__(self):
        if self.rule is Rule.EXPLICIT:
            if self.levels is None or any(not 0.0 <= x <= 1.0 for x in self.levels):
                raise ValueError("activity levels must lie in [0, 1]")
        elif self.v_star is None:
            raise ValueError("a threshold rule needs v_star")

    @classmethod
    def threshold(cls, v_star: float) -> "StrategyProfile":
        return cls(Rule.THRESHOLD, v_star=float(v_star))

    @classmethod
    def explicit(cls, levels) -> "StrategyProfile":
        return cls(Rule.EXPLICIT, levels=tuple(float(x) for x in levels))

    def activity(self, valuations: np.ndarray) -> np.ndarray:
        if self.rule is Rule.THRESHOLD:
            return (valuations <= self.v_star).astype(float)
        levels = np.asarray(self.levels)
        if levels.shape[-1] != valuations.shape[-1]:
            raise ValueError(f"{levels.shape[-1]} activity levels for "
                             f"{valuations.shape[-1]} users")
        return np.broadcast_to(levels, valuations.shape)


@dataclass(frozen=True)
class SimulationReport:
    runs: int
    mean_revenue: float
    var_revenue: float
    mean_profiled_revenue: float
    mean_nonprofiled_revenue: float
    mean_user_payoff: float
    se_revenue: float
    se_profiled_revenue: float
    se_nonprofiled_revenue: float
    min_revenue: float
    max_revenue: float
    series: np.ndarray | None = field(default=None, repr=False, compare=False)
    profiled_series: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def std_revenue(self) -> float:
        return math.sqrt(self.var_revenue)

    def metrics(self) -> dict:
        return {"runs": self.runs, "mean_revenue": self.mean_revenue,
                "var_revenue": self.var_revenue, "std_revenue": self.std_revenue,
                "min_revenue": self.min_revenue, "max_revenue": self.max_revenue,
                "mean_profiled_revenue": self.mean_profiled_revenue,
                "mean_nonprofiled_revenue": self.mean_nonprofiled_revenue,
                "mean_user_payoff": self.mean_user_payoff,
                "se_revenue": self.se_revenue,
                "se_profiled_revenue": self.se_profiled_revenue,
                "se_nonprofiled_revenue": self.se_nonprofiled_revenue}


def _draws(seed, runs, n):
    values = np.empty((runs, n))
    coins = np.empty((runs, n))
    for run in range(runs):
        values[run] = uniform_stream(seed, VALUATION, run, n)
        coins[run] = uniform_stream(seed, PROFILING, run, n)
    return values, coins


def _se(series):
    if len(series) < 2:
        return 0.0
    return float(np.std(series, ddof=1) / math.sqrt(len(series)))


def _market_runs(cfg, price, strategy, uniforms, coins):
    """Per-run (profiled revenue, non-profiled revenue, mean user payoff)."""
    values = np.asarray(cfg.dist.quantile(uniforms), dtype=float).reshape(uniforms.shape)
    x = strategy.activity(values)
    chance = cfg.delta * x ** cfg.alpha
    profiled = coins < chance
    buys = ~profiled & (values >= price)
    profiled_revenue = np.sum(np.where(profiled, values, 0.0), axis=1)
    nonprofiled_revenue = price * np.sum(buys, axis=1)
    peers = np.sum(x, axis=1, keepdims=True) - x
    payoff = x * np.log(peers + cfg.omega0) + np.where(buys, values - price, 0.0)
    return profiled_revenue, nonprofiled_revenue, payoff.mean(axis=1)


def _report(profiled, nonprofiled, payoff, keep_series):
    total = profiled + nonprofiled
    runs = len(total)
    return SimulationReport(
        runs=runs,
        mean_revenue=float(total.mean()),
        var_revenue=float(total.var(ddof=1)) if runs > 1 else 0.0,
        mean_profiled_revenue=float(profiled.mean()),
        mean_nonprofiled_revenue=float(nonprofiled.mean()),
        mean_user_payoff=float(payoff.mean()),
        se_revenue=_se(total),
        se_profiled_revenue=_se(profiled),
        se_nonprofiled_revenue=_se(nonprofiled),
        min_revenue=float(total.min()),
        max_revenue=float(total.max()),
        series=total if keep_series else None,
        profiled_series=profiled if keep_series else None,
    )


def simulate_market(cfg: MarketConfig, price: float, strategy: StrategyProfile, seed: int,
                    runs: int, keep_series: bool = False) -> SimulationReport:
    """Simulate ``runs`` independent markets of cfg.n users.

    Profiled users pay their valuation; the rest buy at ``price`` when
    their valuation reaches it.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    uniforms, coins = _draws(seed, runs, cfg.n)
    return _report(*_market_runs(cfg, price, strategy, uniforms, coins), keep_series)


@dataclass(frozen=True)
class PairedReport:
    first: SimulationReport
    second: SimulationReport
    mean_difference: float
    se_difference: float
    var_paired_difference: float
    var_unpaired_difference: float


def simulate_paired(cfg_a, price_a, strategy_a, cfg_b, price_b, strategy_b, seed: int,
                    runs: int) -> PairedReport:
    """Two markets driven by the same valuation and profiling draws."""
    if runs < 2:
        raise ValueError("paired comparison needs at least 2 runs")
    if cfg_a.n != cfg_b.n:
        raise ValueError("paired markets need the same number of users")
    uniforms, coins = _draws(seed, runs, cfg_a.n)
    first = _report(*_market_runs(cfg_a, price_a, strategy_a, uniforms, coins), True)
    second = _report(*_market_runs(cfg_b, price_b, strategy_b, uniforms, coins), True)
    diff = second.series - first.series
    return PairedReport(first, second, float(diff.mean()), _se(diff),
                        float(diff.var(ddof=1)), first.var_revenue + second.var_revenue)


def ratio_with_se(numerator: np.ndarray, denominator: np.ndarray):
    """mean(num) / mean(den) - 1 with a delta-method standard error."""
    runs = len(numerator)
    top, bottom = numerator.mean(), denominator.mean()
    ratio = top / bottom
    spread = np.var(numerator - ratio * denominator, ddof=1)
    return float(ratio - 1.0), float(math.sqrt(spread / runs) / abs(bottom))


def revenue_moments(cfg: MarketConfig, v_star: float, p0: float):
    """Exact mean and variance of total revenue under a threshold profile.

    Users are independent, so both moments are n times the per-user ones.
    A user pays v when profiled (v <= v*, probability delta) and p0 when
    not profiled with v >= p0.
    """
    if not cfg.is_uniform:
        raise UnsupportedDistribution("closed-form moments are derived for uniform valuations")
    n, vbar, delta = cfg.n, cfg.vbar, cfg.delta
    v_star = min(v_star, vbar)
    buying = ((vbar - p0) - delta * max(0.0, v_star - p0)) / vbar
    first = delta * v_star ** 2 / (2.0 * vbar) + p0 * buying
    second = delta * v_star ** 3 / (3.0 * vbar) + p0 * p0 * buying
    return n * first, n * (second - first * first)


def best_response_oracle(cfg: MarketConfig, p0: float, grid: int = 501) -> float:
    """Threshold reached by best-response dynamics on a grid of valuations.

    Given a common threshold v, a type g stays active iff its expected
    social benefit J(v) covers its expected profiling loss
    delta * max(g - p0, 0). The new threshold is the largest such grid type.
    Iteration starts from v = p0 and from v = vbar; the two monotone limits
    must land within one grid cell of each other.
    """
    if grid < 101:
        raise ValueError("grid must have at least 101 points")
    dist = cfg.dist
    types = np.linspace(max(0.0, dist.lower), dist.upper, grid)
    width = types[1] - types[0]
    loss = cfg.delta * np.maximum(types - p0, 0.0)

    def respond(v):
        keeps = np.nonzero(expected_benefit(cfg.social, v) >= loss)[0]
        return types[keeps[-1]] if len(keeps) else types[0]

    def limit(v):
        for _ in range(cfg.max_iter):
            nxt = respond(v)
            if nxt == v:
                return v
            v = nxt
        raise NonConvergence("best-response dynamics did not settle", last=v)

    lower = limit(float(min(max(p0, types[0]), types[-1])))
    upper = limit(float(types[-1]))
    if upper - lower > width * (1.0 + 1e-9):
        raise LimitsDisagree("best-response limits differ by more than one cell",
                             lower=lower, upper=upper)
    return float(upper)


@dataclass(frozen=True)
class BenchmarkRow:
    mechanism: str
    mean_revenue: float
    se_revenue: float
    improvement_vs_pip: float
    improvement_se: float
    closed_form_revenue: float
    closed_form_improvement: float
    improvement_vs_tpp: float
    improvement_vs_tpp_se: float
    closed_form_improvement_vs_tpp: float


def benchmark_comparison(cfg: MarketConfig, seed: int, runs: int) -> list:
    """Profile-independent (PIP), traditional (TPP) and social (SPP) profiling.

    All three mechanisms are simulated on the same draws.
    """
    if not cfg.is_uniform:
        raise UnsupportedDistribution("mechanism comparison is derived for uniform valuations")
    n, vbar, delta = cfg.n, cfg.vbar, cfg.delta
    spp = solve_equilibrium(cfg)
    settings = {
        "PIP": (cfg.with_delta(0.0), vbar / 2.0, StrategyProfile.threshold(vbar),
                n * vbar / 4.0),
        "TPP": (cfg, vbar / 2.0, StrategyProfile.threshold(vbar / 2.0),
                n * vbar * (delta / 8.0 + 0.25)),
        "SPP": (cfg, spp.p0_star, StrategyProfile.threshold(spp.v_star),
                sum(expected_revenue(spp, cfg))),
    }
    uniforms, coins = _draws(seed, runs, n)
    series = {}
    for name, (market, price, strategy, _) in settings.items():
        profiled, nonprofiled, _ = _market_runs(market, price, strategy, uniforms, coins)
        series[name] = profiled + nonprofiled
    pip_closed, tpp_closed = settings["PIP"][3], settings["TPP"][3]
    rows = []
    for name, (_, _, _, closed) in settings.items():
        total = series[name]
        gain = ratio_with_se(total, series["PIP"]) if name != "PIP" else (0.0, 0.0)
        over_tpp = ratio_with_se(total, series["TPP"]) if name != "TPP" else (0.0, 0.0)
        rows.append(BenchmarkRow(name, float(total.mean()), _se(total), *gain,
                                 float(closed), float(closed / pip_closed - 1.0),
                                 *over_tpp, float(closed / tpp_closed - 1.0)))
    return rows


@dataclass(frozen=True)
class VarianceComparison:
    mean_ratio: float
    mean_ratio_se: float
    var_ratio: float
    std_ratio: float
    three_stage: SimulationReport
    four_stage: SimulationReport
    var_paired_difference: float
    var_unpaired_difference: float


def variance_comparison(cfg: MarketConfig, seed: int, runs: int) -> VarianceComparison:
    """Paired simulation of the three-stage and four-stage equilibria."""
    if not cfg.is_uniform:
        raise UnsupportedDistribution("the four-stage model is derived for uniform valuations")
    if not 0.0 < cfg.delta < 1.0:
        raise ValueError("delta must lie strictly between 0 and 1")
    three = solve_pbe(cfg)
    four = solve_four_stage(cfg)
    paired = simulate_paired(cfg, three.p0_star, StrategyProfile.threshold(three.v_star),
                             cfg, four.p0_e, StrategyProfile.threshold(four.v_e), seed, runs)
    mean_ratio, mean_se = ratio_with_se(paired.second.series, paired.first.series)
    if paired.first.var_revenue > 0:
        var_ratio = paired.second.var_revenue / paired.first.var_revenue - 1.0
    else:
        var_ratio = 0.0
    std_ratio = math.sqrt(var_ratio + 1.0) - 1.0
    return VarianceComparison(mean_ratio, mean_se, float(var_ratio), float(std_ratio),
                              paired.first, paired.second, paired.var_paired_difference,
                              paired.var_unpaired_difference)


def payoff_sweep(cfg: MarketConfig, deltas, v_grid) -> np.ndarray:
    """Expected user payoff; rows follow ``deltas``, columns ``v_grid``."""
    out = np.empty((len(deltas), len(v_grid)))
    for row, delta in enumerate(deltas):
        market = cfg.with_delta(float(delta))
        outcome = solve_equilibrium(market)
        out[row] = [expected_user_payoff(outcome, market, float(v)) for v in v_grid]
    return out
