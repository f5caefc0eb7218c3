"""Three-stage equilibrium: activity threshold, uniform price and benchmarks.

Users with valuation at or below a common threshold v* stay socially active
and risk being profiled; the rest go quiet. The seller charges profiled users
their valuation and everyone else a uniform price p0. The equilibrium couples
the two through

    v* = min(p0 + J(v*) / delta, vbar)    (users)
    p0 = argmax posterior revenue         (seller)

Every scalar root is found by bisection on a bracket with a single sign
change.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .dist import Uniform, ValuationDistribution, distribution_from_dict, monopoly_price
from .errors import (
    AboveThreshold,
    ConfigError,
    NoEquilibriumFound,
    NoInteriorPrice,
    OutOfSupport,
    PerfectAccuracy,
    SolverError,
    TrivialRegime,
    UnsupportedDistribution,
    ZeroAccuracy,
)
from .social import SocialParams, benefit_derivative, expected_benefit

__all__ = [
    "Case",
    "Regime",
    "Awareness",
    "MarketConfig",
    "EquilibriumOutcome",
    "RegimeClassification",
    "PayoffRegion",
    "threshold_given_price",
    "uniform_price_given_threshold",
    "existence_threshold",
    "posterior_revenue",
    "solve_pbe",
    "solve_equilibrium",
    "no_profiling_benchmark",
    "perfect_profiling_benchmark",
    "no_social_network_benchmark",
    "expected_revenue",
    "threshold_sensitivity",
    "classify_regime",
    "expected_user_payoff",
    "no_awareness_payoff",
    "awareness_comparison",
    "payoff_increasing_region",
    "equilibrium_residual",
]


class Case(str, Enum):
    ALL_ACTIVE = "AllActive"
    PARTIALLY_ACTIVE = "PartiallyActive"
    NO_PROFILING = "NoProfiling"
    PERFECT_PROFILING = "PerfectProfiling"
    NO_SOCIAL_NETWORK = "NoSocialNetwork"


class Regime(str, Enum):
    I = "I"
    II = "II"
    III = "III"


class Awareness(str, Enum):
    EQUAL = "Equal"
    WORSE_AWARE = "WorseAware"
    BETTER_AWARE = "BetterAware"


@dataclass(frozen=True)
class MarketConfig:
    social: SocialParams
    delta: float
    alpha: float = 0.5
    tol: float = 1e-12
    max_iter: int = 10_000

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta={self.delta} outside [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha={self.alpha} outside (0, 1)")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")
        if not self.nontrivial:
            warnings.warn(
                f"vbar={self.vbar} <= 2 ln(n-1+omega0)={2 * self.top_benefit:.6g}: "
                "only the all-active equilibrium exists", RuntimeWarning, stacklevel=3)

    @classmethod
    def build(cls, n: int, dist: ValuationDistribution, delta: float, omega0: float = 2.0,
              **kwargs) -> "MarketConfig":
        return cls(SocialParams(n, omega0, dist), delta, **kwargs)

    @classmethod
    def uniform(cls, n: int, vbar: float, delta: float, omega0: float = 2.0,
                **kwargs) -> "MarketConfig":
        return cls.build(n, Uniform(vbar), delta, omega0, **kwargs)

    def with_delta(self, delta: float) -> "MarketConfig":
        return dataclasses.replace(self, delta=delta)

    def replace(self, **changes) -> "MarketConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n(self) -> int:
        return self.social.n

    @property
    def omega0(self) -> float:
        return self.social.omega0

    @property
    def dist(self) -> ValuationDistribution:
        return self.social.dist

    @property
    def vbar(self) -> float:
        return self.social.vbar

    @property
    def top_benefit(self) -> float:
        return self.social.top_benefit

    @property
    def is_uniform(self) -> bool:
        return isinstance(self.dist, Uniform)

    @property
    def nontrivial(self) -> bool:
        return self.vbar > 2.0 * self.top_benefit

    def to_dict(self) -> dict:
        return {"n": self.n, "omega0": self.omega0, "delta": self.delta,
                "alpha": self.alpha, "tol": self.tol, "max_iter": self.max_iter,
                "distribution": self.dist.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "MarketConfig":
        if not isinstance(data, dict):
            raise ConfigError("market: expected an object")
        for key in ("n", "delta"):
            if key not in data:
                raise ConfigError(f"market.{key}: missing")
        if "distribution" in data:
            dist = distribution_from_dict(data["distribution"])
        elif "vbar" in data:
            dist = distribution_from_dict({"kind": "uniform", "vbar": data["vbar"]})
        else:
            raise ConfigError("market.distribution: missing (or give market.vbar)")
        n = data["n"]
        if not isinstance(n, int) or isinstance(n, bool):
            raise ConfigError("market.n: expected an integer")
        numbers = {}
        for key, default in (("delta", None), ("omega0", 2.0), ("alpha", 0.5),
                             ("tol", 1e-12)):
            value = data.get(key, default)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"market.{key}: expected a number")
            numbers[key] = float(value)
        max_iter = data.get("max_iter", 10_000)
        if not isinstance(max_iter, int) or isinstance(max_iter, bool):
            raise ConfigError("market.max_iter: expected an integer")
        try:
            social = SocialParams(n, numbers["omega0"], dist)
        except ValueError as exc:
            raise ConfigError(f"market: {exc}") from exc
        return cls(social, numbers["delta"], numbers["alpha"], numbers["tol"], max_iter)


@dataclass(frozen=True)
class EquilibriumOutcome:
    v_star: float
    p0_star: float
    case: Case
    residual: float
    expected_revenue_profiled: float
    expected_revenue_nonprofiled: float
    fraction_active: float

    @property
    def total_revenue(self) -> float:
        return self.expected_revenue_profiled + self.expected_revenue_nonprofiled

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["case"] = self.case.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EquilibriumOutcome":
        names = [f.name for f in dataclasses.fields(cls)]
        values = {name: data[name] for name in names}
        values["case"] = Case(values["case"])
        return cls(**values)


@dataclass(frozen=True)
class RegimeClassification:
    delta_hat: float
    delta_tilde: float
    regime: Regime


class PayoffRegion(NamedTuple):
    v_hat: float
    delta_dagger: float


def _bisect(func, lo, hi, cfg, scale=1.0):
    return optimize.bisect(func, lo, hi, xtol=cfg.tol * scale, rtol=1e-15,
                           maxiter=cfg.max_iter)


def _benefit(cfg: MarketConfig, v: float) -> float:
    return expected_benefit(cfg.social, v)


def _nudge(cfg):
    return cfg.tol / 10.0


def threshold_given_price(cfg: MarketConfig, p0: float) -> float:
    """Activity threshold users adopt when the uniform price is p0."""
    if cfg.delta == 0.0:
        raise ZeroAccuracy("delta = 0: use no_profiling_benchmark")
    if p0 < 0:
        raise ValueError("p0 must be non-negative")
    vbar = cfg.vbar
    if p0 >= vbar - cfg.top_benefit / cfg.delta:
        return vbar

    def gap(v):
        return p0 + _benefit(cfg, v) / cfg.delta - v

    return _bisect(gap, p0, vbar - _nudge(cfg), cfg)


def posterior_revenue(cfg: MarketConfig, v_star: float, p0: float) -> float:
    """Expected revenue per non-profiled user at price p0 under the posterior."""
    dist, delta = cfg.dist, cfg.delta
    active = dist.cdf(v_star)
    sold = (1.0 - dist.cdf(p0)) - delta * max(0.0, active - dist.cdf(p0))
    return p0 * sold / (1.0 - delta * active)


def _existence_gap(cfg, v):
    return 1.0 - cfg.dist.cdf(v) - (1.0 - cfg.delta) * v * cfg.dist.pdf(v)


def existence_threshold(cfg: MarketConfig, grid_points: int = 2001) -> float:
    """Smallest threshold above which an interior uniform price exists.

    Returns the top of the support when no threshold qualifies.
    """
    dist = cfg.dist
    top = dist.upper - 1e-9 * (dist.upper - dist.lower)
    grid = np.linspace(dist.lower, top, grid_points)
    gaps = np.array([_existence_gap(cfg, v) for v in grid])
    if gaps[-1] >= 0:
        return dist.upper
    nonneg = np.nonzero(gaps >= 0)[0]
    if len(nonneg) == 0:
        return dist.lower
    k = nonneg[-1]
    return _bisect(lambda v: _existence_gap(cfg, v), grid[k], grid[k + 1], cfg)


def _interior_price(cfg, v_star, grid_points=129):
    """Global maximizer of posterior revenue on (0, v*).

    Every downward crossing of the marginal revenue is refined by bisection
    and the best local maximum wins, so non-concave revenue curves are safe.
    """
    dist, delta = cfg.dist, cfg.delta
    weight = (1.0 - delta) / (1.0 - delta * dist.cdf(v_star))

    def marginal(p):
        return 1.0 - weight * dist.cdf(p) - weight * p * dist.pdf(p)

    if not marginal(v_star) < 0:
        raise NoInteriorPrice(
            f"no interior uniform price for v*={v_star:.6g}",
            v_check=existence_threshold(cfg))
    grid = np.linspace(0.0, v_star, grid_points)
    slopes = marginal(grid)
    crossings = np.nonzero((slopes[:-1] > 0) & (slopes[1:] <= 0))[0]
    candidates = [_bisect(marginal, grid[k], grid[k + 1], cfg) for k in crossings]
    return max(candidates, key=lambda p: p * (1.0 - weight * dist.cdf(p)))


def _price_marginal(cfg, v_star, p):
    dist, delta = cfg.dist, cfg.delta
    weight = (1.0 - delta) / (1.0 - delta * dist.cdf(v_star))
    return 1.0 - weight * dist.cdf(p) - weight * p * dist.pdf(p)


def uniform_price_given_threshold(cfg: MarketConfig, v_star: float) -> float:
    """Seller's optimal uniform price given the users' threshold."""
    if cfg.delta == 1.0:
        raise PerfectAccuracy("delta = 1: use perfect_profiling_benchmark")
    vbar, delta = cfg.vbar, cfg.delta
    if not 0.0 <= v_star <= vbar:
        raise OutOfSupport(f"v*={v_star} outside [0, {vbar}]")
    if cfg.is_uniform:
        if v_star <= vbar / 2.0:
            return vbar / 2.0
        if v_star <= vbar / (2.0 - delta):
            return v_star
        return (vbar - delta * v_star) / (2.0 * (1.0 - delta))
    return _interior_price(cfg, v_star)


def _outcome(cfg, v_star, p0, case, residual, delta):
    dist, n = cfg.dist, cfg.n
    profiled = n * delta * dist.mean_below(v_star)
    active = dist.cdf(v_star)
    sold = (1.0 - dist.cdf(p0)) - delta * max(0.0, active - dist.cdf(p0))
    return EquilibriumOutcome(
        v_star=float(v_star), p0_star=float(p0), case=case, residual=float(residual),
        expected_revenue_profiled=float(profiled),
        expected_revenue_nonprofiled=float(max(0.0, n * p0 * sold)),
        fraction_active=float(active))


def _check_accuracy(cfg):
    if cfg.delta == 0.0:
        raise ZeroAccuracy("delta = 0: use no_profiling_benchmark")
    if cfg.delta == 1.0:
        raise PerfectAccuracy("delta = 1: use perfect_profiling_benchmark")


def equilibrium_residual(cfg: MarketConfig, v_star: float, p0: float) -> float:
    """Largest violation of the two equilibrium conditions at (v*, p0)."""
    delta = cfg.delta
    if v_star >= cfg.vbar:
        user = max(0.0, cfg.vbar - p0 - cfg.top_benefit / delta)
    else:
        user = abs(v_star - p0 - _benefit(cfg, v_star) / delta)
    if cfg.is_uniform:
        seller = abs(p0 - uniform_price_given_threshold(cfg, v_star))
    else:
        seller = abs(_price_marginal(cfg, v_star, p0))
    return max(user, seller)


def solve_pbe(cfg: MarketConfig) -> EquilibriumOutcome:
    """Unique equilibrium for 0 < delta < 1."""
    _check_accuracy(cfg)
    if cfg.is_uniform:
        return _solve_uniform(cfg)
    return _solve_general(cfg)


def _solve_uniform(cfg):
    vbar, delta, top = cfg.vbar, cfg.delta, cfg.top_benefit
    if vbar / 2.0 <= top / delta:
        p0 = vbar / 2.0
        return _outcome(cfg, vbar, p0, Case.ALL_ACTIVE,
                        equilibrium_residual(cfg, vbar, p0), delta)

    def balance(v):
        return (2.0 * delta - delta ** 2) * v - 2.0 * (1.0 - delta) * _benefit(cfg, v) - delta * vbar

    # the price identity amplifies the root error, so bisect well below tol
    v_star = _bisect(balance, vbar / (2.0 - delta), vbar - _nudge(cfg), cfg, scale=1e-3)
    p0 = v_star - _benefit(cfg, v_star) / delta
    if not p0 > vbar / 2.0:
        raise SolverError(f"partially active price {p0} not above vbar/2")
    return _outcome(cfg, v_star, p0, Case.PARTIALLY_ACTIVE,
                    equilibrium_residual(cfg, v_star, p0), delta)


def _solve_general(cfg, grid_points=257):
    dist, delta, top = cfg.dist, cfg.delta, cfg.top_benefit
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p_hat = monopoly_price(dist)
    if dist.upper - p_hat <= top / delta:
        residual = max(abs(threshold_given_price(cfg, p_hat) - dist.upper),
                       abs(1.0 - dist.cdf(p_hat) - p_hat * dist.pdf(p_hat))
                       if dist.lower < p_hat < dist.upper else 0.0)
        return _outcome(cfg, dist.upper, p_hat, Case.ALL_ACTIVE, residual, delta)

    def slack(v):
        return _interior_price(cfg, v) - v + _benefit(cfg, v) / delta

    span = dist.upper - dist.lower
    grid = np.linspace(dist.lower, dist.upper - 1e-9 * span, grid_points)[1:]
    feasible = np.array([_existence_gap(cfg, v) < 0 for v in grid])
    values = np.full(len(grid), np.nan)
    for i in np.nonzero(feasible)[0]:
        values[i] = slack(grid[i])
    brackets = []
    for i in range(len(grid) - 1):
        if feasible[i] and feasible[i + 1] and values[i] > 0 >= values[i + 1]:
            brackets.append((grid[i], grid[i + 1]))
    # a sign change can hide between a feasible edge and the first grid point
    for i in range(len(grid) - 1):
        if not feasible[i] and feasible[i + 1] and values[i + 1] <= 0:
            left = _bisect(lambda v: _existence_gap(cfg, v), grid[i], grid[i + 1], cfg)
            left = min(left + 1e-9 * span, grid[i + 1])
            if _existence_gap(cfg, left) < 0 and slack(left) > 0:
                brackets.append((left, grid[i + 1]))
    diagnostics = {"v_check": existence_threshold(cfg), "p_hat": p_hat,
                   "slack_at_top": float(values[-1]) if feasible[-1] else None,
                   "brackets": len(brackets)}
    if len(brackets) != 1:
        reason = "no sign change" if not brackets else "several sign changes"
        raise NoEquilibriumFound(f"general-F threshold search found {reason}", diagnostics)
    lo, hi = brackets[0]
    v_star = _bisect(slack, lo, hi, cfg)
    p0 = _interior_price(cfg, v_star)
    residual = equilibrium_residual(cfg, v_star, p0)
    if not (residual < 1e-8 and 0.0 <= p0 < v_star):
        diagnostics["residual"] = residual
        raise NoEquilibriumFound("candidate failed verification", diagnostics)
    return _outcome(cfg, v_star, p0, Case.PARTIALLY_ACTIVE, residual, delta)


def no_profiling_benchmark(cfg: MarketConfig) -> EquilibriumOutcome:
    """No profiling: everyone is active and pays the monopoly price."""
    dist = cfg.dist
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        price = monopoly_price(dist)
    residual = 0.0
    if dist.lower < price < dist.upper and not cfg.is_uniform:
        residual = abs(1.0 - dist.cdf(price) - price * dist.pdf(price))
    return _outcome(cfg, dist.upper, price, Case.NO_PROFILING, residual, 0.0)


def perfect_profiling_benchmark(cfg: MarketConfig) -> EquilibriumOutcome:
    """Perfect profiling: the uniform price only needs to keep everyone active."""
    price = cfg.vbar - cfg.top_benefit
    return _outcome(cfg, cfg.vbar, price, Case.PERFECT_PROFILING, 0.0, 1.0)


def solve_equilibrium(cfg: MarketConfig) -> EquilibriumOutcome:
    """Route delta = 0 and delta = 1 to their benchmarks, else solve_pbe."""
    if cfg.delta == 0.0:
        return no_profiling_benchmark(cfg)
    if cfg.delta == 1.0:
        return perfect_profiling_benchmark(cfg)
    return solve_pbe(cfg)


def _effective_delta(outcome, cfg):
    if outcome.case is Case.NO_PROFILING:
        return 0.0
    if outcome.case is Case.PERFECT_PROFILING:
        return 1.0
    return cfg.delta


def expected_revenue(outcome: EquilibriumOutcome, cfg: MarketConfig):
    """(profiled, non-profiled) expected revenue of an outcome."""
    result = _outcome(cfg, outcome.v_star, outcome.p0_star, outcome.case, 0.0,
                      _effective_delta(outcome, cfg))
    return result.expected_revenue_profiled, result.expected_revenue_nonprofiled


def no_social_network_benchmark(cfg: MarketConfig) -> EquilibriumOutcome:
    """Users disclose without any social benefit: threshold and price vbar/2."""
    if not cfg.is_uniform:
        raise UnsupportedDistribution("derived for uniform valuations only")
    half = cfg.vbar / 2.0
    outcome = _outcome(cfg, half, half, Case.NO_SOCIAL_NETWORK, 0.0, cfg.delta)
    social = solve_equilibrium(cfg)
    if not half < social.v_star:
        raise SolverError(f"no-network threshold {half} not below v*={social.v_star}")
    return outcome


def _theta_partials(cfg, v_star):
    delta, vbar = cfg.delta, cfg.vbar
    d_delta = vbar - 2.0 * v_star + 2.0 * delta * v_star - 2.0 * _benefit(cfg, v_star)
    d_v = -2.0 * delta + delta ** 2 + 2.0 * (1.0 - delta) * benefit_derivative(cfg.social, v_star)
    return d_delta, d_v


def threshold_sensitivity(cfg: MarketConfig, v_star: float | None = None) -> float:
    """dv*/d delta along the partially active branch (implicit function rule)."""
    if v_star is None:
        v_star = solve_pbe(cfg).v_star
    d_delta, d_v = _theta_partials(cfg, v_star)
    return -d_delta / d_v


def _require_uniform(cfg):
    if not cfg.is_uniform:
        raise UnsupportedDistribution("derived for uniform valuations only")


def classify_regime(cfg: MarketConfig) -> RegimeClassification:
    """Locate delta_hat, delta_tilde and the regime of cfg.delta."""
    _require_uniform(cfg)
    if not cfg.nontrivial:
        raise TrivialRegime("vbar <= 2 ln(n-1+omega0): every delta is regime I")
    delta_hat = 2.0 * cfg.top_benefit / cfg.vbar

    def turning(delta):
        local = cfg.with_delta(delta)
        return _theta_partials(local, solve_pbe(local).v_star)[0]

    edge = 1e-9
    delta_tilde = _bisect(turning, delta_hat + edge, 1.0 - edge, cfg)
    if cfg.delta <= delta_hat:
        regime = Regime.I
    elif cfg.delta <= delta_tilde:
        regime = Regime.II
    else:
        regime = Regime.III
    return RegimeClassification(delta_hat, delta_tilde, regime)


def expected_user_payoff(outcome: EquilibriumOutcome, cfg: MarketConfig, v_i: float) -> float:
    """Expected payoff of a user with valuation v_i in the given outcome."""
    if not 0.0 <= v_i <= cfg.vbar:
        raise OutOfSupport(f"v_i={v_i} outside [0, {cfg.vbar}]")
    delta = _effective_delta(outcome, cfg)
    v_star, p0 = outcome.v_star, outcome.p0_star
    if v_i > v_star:
        return v_i - p0
    social = _benefit(cfg, v_star)
    return social + (1.0 - delta) * max(v_i - p0, 0.0)


def no_awareness_payoff(cfg: MarketConfig, v_i: float) -> float:
    """Payoff when users ignore profiling: everyone active, price vbar/2."""
    return cfg.top_benefit + (1.0 - cfg.delta) * max(v_i - cfg.vbar / 2.0, 0.0)


def awareness_comparison(cfg: MarketConfig, v_i: float):
    """Whether knowing about profiling leaves user v_i worse off.

    Returns (Awareness, v_dagger); v_dagger is None when delta = 0.
    """
    _require_uniform(cfg)
    if not 0.0 <= v_i <= cfg.vbar:
        raise OutOfSupport(f"v_i={v_i} outside [0, {cfg.vbar}]")
    delta = cfg.delta
    if delta == 0.0:
        return Awareness.EQUAL, None
    p0 = solve_equilibrium(cfg).p0_star
    v_dagger = (2.0 * cfg.top_benefit + 2.0 * p0 - (1.0 - delta) * cfg.vbar) / (2.0 * delta)
    delta_hat = 2.0 * cfg.top_benefit / cfg.vbar
    if delta <= delta_hat or delta == 1.0 or v_i == v_dagger:
        return Awareness.EQUAL, v_dagger
    if v_i < v_dagger:
        return Awareness.WORSE_AWARE, v_dagger
    return Awareness.BETTER_AWARE, v_dagger


def payoff_increasing_region(cfg: MarketConfig, v_i: float) -> PayoffRegion:
    """v_hat and the accuracy beyond which user v_i gains from better profiling."""
    _require_uniform(cfg)
    v_hat = cfg.vbar - cfg.top_benefit
    if v_i >= v_hat:
        raise AboveThreshold(f"v_i={v_i} is not below v_hat={v_hat}")
    delta_tilde = classify_regime(cfg).delta_tilde

    def price_at(delta):
        return solve_pbe(cfg.with_delta(delta)).p0_star

    if v_i <= price_at(delta_tilde):
        return PayoffRegion(v_hat, delta_tilde)
    top = 1.0 - 1e-12
    if price_at(top) < v_i:
        return PayoffRegion(v_hat, 1.0)
    return PayoffRegion(v_hat, _bisect(lambda d: price_at(d) - v_i, delta_tilde, top, cfg))
