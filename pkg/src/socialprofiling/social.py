"""Expected social-network benefit of an active user.

With k other users active, an active user enjoys ln(k + omega0). When every
other user is active independently with probability F(v), k is binomial and
the expected benefit is

    J(v) = sum_m C(n-1, m) ln(m + omega0) F(v)^m (1 - F(v))^(n-1-m).

The derivatives are computed from the telescoped sums of first and second
differences of ln(k + omega0), which keeps every term positive or negative
and avoids cancellation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .dist import ValuationDistribution
from .errors import OutOfSupport

__all__ = [
    "SocialParams",
    "binomial_weights",
    "expected_log_count",
    "expected_benefit",
    "benefit_derivative",
    "benefit_second_derivative",
    "mc_benefit_oracle",
]

EXACT_LIMIT = 10_000


@dataclass(frozen=True)
class SocialParams:
    n: int
    omega0: float
    dist: ValuationDistribution

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer of at least 2")
        if not self.omega0 > 1:
            raise ValueError("omega0 must exceed 1")

    @property
    def vbar(self) -> float:
        return self.dist.upper

    @property
    def top_benefit(self) -> float:
        """Benefit when all other users are active, ln(n - 1 + omega0)."""
        return math.log(self.n - 1 + self.omega0)


def binomial_weights(trials: int, prob: float) -> np.ndarray:
    """Binomial pmf over 0..trials, computed term by term in log space."""
    if trials == 0 or prob <= 0.0:
        out = np.zeros(trials + 1)
        out[0] = 1.0
        return out
    if prob >= 1.0:
        out = np.zeros(trials + 1)
        out[-1] = 1.0
        return out
    k = np.arange(trials + 1)
    log_choose = (special.gammaln(trials + 1) - special.gammaln(k + 1)
                  - special.gammaln(trials - k + 1))
    return np.exp(log_choose + k * math.log(prob) + (trials - k) * math.log1p(-prob))


def expected_log_count(trials: int, prob: float, omega0: float, shift: int = 0) -> float:
    """E ln(k + shift + omega0) for k ~ Binomial(trials, prob)."""
    if trials > EXACT_LIMIT:
        warnings.warn("binomial expectation above the exact limit uses a "
                      "second-order normal approximation", RuntimeWarning, stacklevel=2)
        mean = trials * prob + shift + omega0
        var = trials * prob * (1.0 - prob)
        return math.log(mean) - var / (2.0 * mean * mean)
    counts = np.arange(trials + 1) + shift + omega0
    return float(binomial_weights(trials, prob) @ np.log(counts))


def _first_gap(trials, prob, omega0):
    """E[ln(k + 1 + omega0) - ln(k + omega0)], k ~ Binomial(trials, prob)."""
    counts = np.arange(trials + 1) + omega0
    return float(binomial_weights(trials, prob) @ np.log1p(1.0 / counts))


def _second_gap(trials, prob, omega0):
    """E of the second difference of ln(. + omega0) at k ~ Binomial(trials, prob)."""
    counts = np.arange(trials + 1) + omega0
    gaps = np.log1p(1.0 / (counts + 1.0)) - np.log1p(1.0 / counts)
    return float(binomial_weights(trials, prob) @ gaps)


def _check_support(params: SocialParams, v: float):
    low = min(0.0, params.dist.lower)
    if not (low <= v <= params.vbar):
        raise OutOfSupport(f"v={v} outside [{low}, {params.vbar}]")


def expected_benefit(params: SocialParams, v: float) -> float:
    _check_support(params, v)
    return expected_log_count(params.n - 1, params.dist.cdf(v), params.omega0)


def benefit_derivative(params: SocialParams, v: float) -> float:
    """dJ/dv = (n-1) f(v) E[first gap], k ~ Binomial(n-2, F(v)).

    At the support endpoints the density takes its one-sided limit, so the
    value is the one-sided derivative.
    """
    _check_support(params, v)
    density = params.dist.pdf(v)
    if density == 0.0:
        return 0.0
    n = params.n
    return (n - 1) * density * _first_gap(n - 2, params.dist.cdf(v), params.omega0)


def benefit_second_derivative(params: SocialParams, v: float) -> float:
    """d2J/dv2 including the density-slope correction for non-uniform F."""
    _check_support(params, v)
    n, omega0, dist = params.n, params.omega0, params.dist
    prob, density = dist.cdf(v), dist.pdf(v)
    curvature = 0.0
    if n >= 3 and density != 0.0:
        curvature = (n - 1) * (n - 2) * density ** 2 * _second_gap(n - 3, prob, omega0)
    slope = dist.pdf_slope(v)
    correction = 0.0
    if slope != 0.0:
        correction = (n - 1) * slope * _first_gap(n - 2, prob, omega0)
    total = curvature + correction
    if math.isfinite(total):
        return total
    # density slope blows up at an endpoint: fall back to a one-sided difference
    h = 1e-6 * (dist.upper - dist.lower)
    inward = -h if v >= dist.upper else h
    return (benefit_derivative(params, v + inward) - benefit_derivative(params, v)) / inward


def mc_benefit_oracle(params: SocialParams, v: float, seed: int, draws: int):
    """Monte Carlo mean and standard error of ln(k + omega0)."""
    if draws < 1000:
        raise ValueError("draws must be at least 1000")
    _check_support(params, v)
    prob = params.dist.cdf(v)
    if prob in (0.0, 1.0):
        # every draw is identical; avoid summation round-off
        return math.log(prob * (params.n - 1) + params.omega0), 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    k = rng.binomial(params.n - 1, prob, size=draws)
    values = np.log(k + params.omega0)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(draws))
