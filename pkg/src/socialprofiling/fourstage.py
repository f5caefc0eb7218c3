"""Four-stage variant: the seller announces a uniform price before users act,
then still charges profiled users their valuation.

Announcing p0 pins the users' threshold at v*(p0), so the seller effectively
picks a threshold v on [v_o, vbar] where v_o is the threshold at a zero
price. Revenue as a function of that threshold is unimodal, which makes a
golden-section search safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize

from .errors import UnsupportedDistribution
from .pbe import MarketConfig, _check_accuracy, solve_pbe, threshold_given_price
from .social import benefit_derivative, expected_benefit

__all__ = [
    "FourStageCase",
    "FourStageOutcome",
    "ModelComparison",
    "zero_price_threshold",
    "revenue_components",
    "total_expected_revenue",
    "revenue_at_threshold",
    "revenue_slope_at_threshold",
    "top_slope",
    "mean_valuation_boundary",
    "solve_four_stage",
    "unimodality_sign_changes",
    "compare_models",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FourStageCase(str, Enum):
    I_ALL_ACTIVE_LOW = "I_AllActiveLow"
    II_ALL_ACTIVE_HIGH = "II_AllActiveHigh"
    III_PARTIALLY_ACTIVE = "III_PartiallyActive"


@dataclass(frozen=True)
class FourStageOutcome:
    v_e: float
    p0_e: float
    case: FourStageCase
    v_tilde: float
    total_expected_revenue: float
    revenue_profiled: float
    revenue_nonprofiled: float

    def to_dict(self) -> dict:
        return {"v_e": self.v_e, "p0_e": self.p0_e, "case": self.case.value,
                "v_tilde": self.v_tilde,
                "total_expected_revenue": self.total_expected_revenue,
                "revenue_profiled": self.revenue_profiled,
                "revenue_nonprofiled": self.revenue_nonprofiled}


@dataclass(frozen=True)
class ModelComparison:
    ratio_total: float
    profiled_delta: float
    nonprofiled_delta: float
    bound: float
    three_stage_revenue: float
    four_stage_revenue: float

    @property
    def within_bound(self) -> bool:
        return 0.0 <= self.ratio_total and (self.ratio_total < self.bound or self.bound == 0.0) \
            and self.ratio_total <= 0.125


def _require_uniform(cfg):
    if not cfg.is_uniform:
        raise UnsupportedDistribution("the four-stage model is derived for uniform valuations")


def revenue_components(cfg: MarketConfig, v_star: float, p0: float):
    """(profiled, non-profiled) expected revenue at threshold v* and price p0 <= v*."""
    n, vbar, delta = cfg.n, cfg.vbar, cfg.delta
    profiled = n * delta * v_star ** 2 / (2.0 * vbar)
    nonprofiled = n * (1.0 - delta * v_star / vbar) * p0 * (
        1.0 - (1.0 - delta) * p0 / (vbar - delta * v_star))
    return profiled, nonprofiled


def total_expected_revenue(cfg: MarketConfig, p0: float) -> float:
    """Seller's revenue when announcing p0 and then profiling."""
    _require_uniform(cfg)
    if not 0.0 <= p0 <= cfg.vbar:
        raise ValueError(f"p0={p0} outside [0, {cfg.vbar}]")
    v_star = threshold_given_price(cfg, p0)
    return sum(revenue_components(cfg, v_star, p0))


def zero_price_threshold(cfg: MarketConfig) -> float:
    """v_o solving v = J(v) / delta, the threshold at a zero price."""
    return threshold_given_price(cfg, 0.0)


def _price_for_threshold(cfg, v):
    return v - expected_benefit(cfg.social, v) / cfg.delta


def revenue_at_threshold(cfg: MarketConfig, v: float) -> float:
    """Revenue when the announced price induces threshold v."""
    return sum(revenue_components(cfg, v, _price_for_threshold(cfg, v)))


def _slope(n, vbar, delta, v, price, price_slope):
    return n * (delta * v / vbar - delta * price / vbar
                + (1.0 - delta * v / vbar) * price_slope
                - 2.0 * (1.0 - delta) / vbar * price * price_slope)


def revenue_slope_at_threshold(cfg: MarketConfig, v: float) -> float:
    """Analytic derivative of revenue_at_threshold."""
    price = _price_for_threshold(cfg, v)
    price_slope = 1.0 - benefit_derivative(cfg.social, v) / cfg.delta
    return _slope(cfg.n, cfg.vbar, cfg.delta, v, price, price_slope)


def top_slope(cfg: MarketConfig, vbar: float | None = None) -> float:
    """Revenue slope at v = vbar, using J(vbar) and J'(vbar) in closed form."""
    n, delta, omega0 = cfg.n, cfg.delta, cfg.omega0
    vbar = cfg.vbar if vbar is None else vbar
    top = math.log(n - 1 + omega0)
    gap = (n - 1) * (top - math.log(n - 2 + omega0))
    return n * (delta - 1.0 + (2.0 - delta) / (delta * vbar) * top
                + (1.0 - delta) / (delta * vbar) * gap
                - 2.0 * (1.0 - delta) / (delta ** 2 * vbar ** 2) * top * gap)


def mean_valuation_boundary(cfg: MarketConfig) -> float:
    """v_tilde: half of the vbar at which top_slope changes sign."""
    _check_accuracy(cfg)
    low = 2.0 * cfg.top_benefit / cfg.delta
    high = 2.0 * low
    while top_slope(cfg, high) >= 0:
        high *= 2.0
    root = optimize.bisect(lambda vb: top_slope(cfg, vb), low, high,
                           xtol=cfg.tol, rtol=1e-15, maxiter=cfg.max_iter)
    return root / 2.0


def _golden_max(func, lo, hi, xtol):
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = func(d)
    return (a + b) / 2.0, a, b


def solve_four_stage(cfg: MarketConfig) -> FourStageOutcome:
    _require_uniform(cfg)
    _check_accuracy(cfg)
    vbar, delta, top = cfg.vbar, cfg.delta, cfg.top_benefit
    v_tilde = mean_valuation_boundary(cfg)

    def finish(v, p0, case):
        profiled, nonprofiled = revenue_components(cfg, v, p0)
        return FourStageOutcome(v, p0, case, v_tilde, profiled + nonprofiled,
                                profiled, nonprofiled)

    if vbar / 2.0 <= top / delta:
        return finish(vbar, vbar / 2.0, FourStageCase.I_ALL_ACTIVE_LOW)
    if top_slope(cfg) >= 0:
        return finish(vbar, vbar - top / delta, FourStageCase.II_ALL_ACTIVE_HIGH)

    low = zero_price_threshold(cfg)
    v_e, a, b = _golden_max(lambda v: revenue_at_threshold(cfg, v), low, vbar, 1e-7)
    # polish on the analytic slope inside the final golden bracket
    pad = 1e-5 * vbar
    a, b = max(low, a - pad), min(vbar, b + pad)
    if revenue_slope_at_threshold(cfg, a) > 0 > revenue_slope_at_threshold(cfg, b):
        v_e = optimize.bisect(lambda v: revenue_slope_at_threshold(cfg, v), a, b,
                              xtol=cfg.tol, rtol=1e-15, maxiter=cfg.max_iter)
    return finish(v_e, _price_for_threshold(cfg, v_e), FourStageCase.III_PARTIALLY_ACTIVE)


def unimodality_sign_changes(cfg: MarketConfig, points: int = 500) -> int:
    """Number of sign changes in first differences of revenue over (v_o, vbar)."""
    grid = np.linspace(zero_price_threshold(cfg), cfg.vbar, points)
    values = np.array([revenue_at_threshold(cfg, v) for v in grid])
    signs = np.sign(np.diff(values))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def compare_models(cfg: MarketConfig) -> ModelComparison:
    """Relative revenue gain of the four-stage model over the three-stage one."""
    three = solve_pbe(cfg)
    four = solve_four_stage(cfg)
    base = three.total_revenue
    return ModelComparison(
        ratio_total=four.total_expected_revenue / base - 1.0,
        profiled_delta=four.revenue_profiled - three.expected_revenue_profiled,
        nonprofiled_delta=four.revenue_nonprofiled - three.expected_revenue_nonprofiled,
        bound=(cfg.delta - cfg.delta ** 2) / 2.0,
        three_stage_revenue=base,
        four_stage_revenue=four.total_expected_revenue,
    )
