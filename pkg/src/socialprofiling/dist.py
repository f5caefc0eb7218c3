"""Valuation distributions on a compact support.

Four parametric families are supported, all with support inside [0, vbar]:
uniform, truncated normal, exponential truncated at vbar and a beta law
rescaled to [0, vbar]. Every family exposes its CDF, density, density slope
and quantile so that samplers and solvers can treat them uniformly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import (
    ConfigError,
    DegenerateDistribution,
    InsufficientData,
    NonFiniteLikelihood,
    OutOfSupport,
)

__all__ = [
    "ValuationDistribution",
    "Uniform",
    "TruncatedNormal",
    "Exponential",
    "Beta",
    "AssumptionReport",
    "TruncatedNormalFit",
    "cdf",
    "monopoly_price",
    "check_assumption_a1",
    "fit_truncated_normal",
    "sample",
    "ks_statistic",
    "ks_critical_value",
    "distribution_from_dict",
]


def _out(values, like):
    """Return a float for scalar input, an array otherwise."""
    if np.ndim(like) == 0:
        return float(values)
    return values


class ValuationDistribution:
    """Common interface. Subclasses are frozen dataclasses."""

    kind = "abstract"
    lower = 0.0
    upper = 1.0

    def _check_width(self):
        if not self.upper > self.lower:
            raise DegenerateDistribution(
                f"support [{self.lower}, {self.upper}] has zero width")

    # subclasses implement these on arrays already clipped to the support
    def _cdf(self, v):
        raise NotImplementedError

    def _pdf(self, v):
        raise NotImplementedError

    def _pdf_slope(self, v):
        raise NotImplementedError

    def _quantile(self, u):
        raise NotImplementedError

    def cdf(self, v):
        x = np.asarray(v, dtype=float)
        inside = np.clip(x, self.lower, self.upper)
        out = np.clip(self._cdf(inside), 0.0, 1.0)
        out = np.where(x <= self.lower, 0.0, np.where(x >= self.upper, 1.0, out))
        return _out(out, v)

    def pdf(self, v):
        """Density; the support endpoints take the one-sided interior limit."""
        x = np.asarray(v, dtype=float)
        inside = (x >= self.lower) & (x <= self.upper)
        out = np.where(inside, self._pdf(np.clip(x, self.lower, self.upper)), 0.0)
        return _out(out, v)

    def pdf_slope(self, v):
        """Derivative of the density, one-sided at the support endpoints."""
        x = np.asarray(v, dtype=float)
        inside = (x >= self.lower) & (x <= self.upper)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = self._pdf_slope(np.clip(x, self.lower, self.upper))
        out = np.where(inside, slope, 0.0)
        return _out(out, v)

    def quantile(self, u):
        p = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        out = np.clip(self._quantile(p), self.lower, self.upper)
        return _out(out, u)

    def mean_below(self, v):
        """Partial expectation E[V; V <= v]."""
        from scipy import integrate

        top = min(max(float(v), self.lower), self.upper)
        if top <= self.lower:
            return 0.0
        # integration by parts keeps the integrand bounded
        area, _ = integrate.quad(self.cdf, self.lower, top, limit=200,
                                 epsabs=1e-13, epsrel=1e-12)
        return top * self.cdf(top) - area

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(ValuationDistribution):
    vbar: float
    kind = "uniform"

    def __post_init__(self):
        self._check_width()

    @property
    def lower(self):
        return 0.0

    @property
    def upper(self):
        return float(self.vbar)

    def _cdf(self, v):
        return v / self.vbar

    def _pdf(self, v):
        return np.full_like(v, 1.0 / self.vbar)

    def _pdf_slope(self, v):
        return np.zeros_like(v)

    def _quantile(self, u):
        return u * self.vbar

    def mean_below(self, v):
        top = min(max(float(v), 0.0), self.upper)
        return top * top / (2.0 * self.upper)

    def to_dict(self):
        return {"kind": "uniform", "vbar": self.upper}


@dataclass(frozen=True)
class TruncatedNormal(ValuationDistribution):
    mu: float
    sigma: float
    lo: float
    hi: float
    kind = "trunc_normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateDistribution("sigma must be positive")
        self._check_width()

    @property
    def lower(self):
        return float(self.lo)

    @property
    def upper(self):
        return float(self.hi)

    @property
    def vbar(self):
        return float(self.hi)

    @property
    def _alpha(self):
        return (self.lo - self.mu) / self.sigma

    @property
    def _beta(self):
        return (self.hi - self.mu) / self.sigma

    @property
    def _mass(self):
        a, b = self._alpha, self._beta
        if a > 0:
            return special.ndtr(-a) - special.ndtr(-b)
        return special.ndtr(b) - special.ndtr(a)

    def _cdf(self, v):
        z = (v - self.mu) / self.sigma
        a = self._alpha
        if a > 0:
            return (special.ndtr(-a) - special.ndtr(-z)) / self._mass
        return (special.ndtr(z) - special.ndtr(a)) / self._mass

    def _pdf(self, v):
        z = (v - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigma * self._mass)

    def _pdf_slope(self, v):
        z = (v - self.mu) / self.sigma
        return -z / self.sigma * self._pdf(v)

    def _quantile(self, u):
        a = self._alpha
        if a > 0:
            tail = special.ndtr(-a) - u * self._mass
            return self.mu - self.sigma * special.ndtri(tail)
        return self.mu + self.sigma * special.ndtri(special.ndtr(a) + u * self._mass)

    def to_dict(self):
        return {"kind": "trunc_normal", "mu": self.mu, "sigma": self.sigma,
                "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Exponential(ValuationDistribution):
    """Exponential law with the given rate, truncated at vbar."""

    rate: float
    vbar: float
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise DegenerateDistribution("rate must be positive")
        self._check_width()

    @property
    def lower(self):
        return 0.0

    @property
    def upper(self):
        return float(self.vbar)

    @property
    def _mass(self):
        return -math.expm1(-self.rate * self.vbar)

    def _cdf(self, v):
        return -np.expm1(-self.rate * v) / self._mass

    def _pdf(self, v):
        return self.rate * np.exp(-self.rate * v) / self._mass

    def _pdf_slope(self, v):
        return -self.rate * self._pdf(v)

    def _quantile(self, u):
        return -np.log1p(-u * self._mass) / self.rate

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate, "vbar": self.upper}


@dataclass(frozen=True)
class Beta(ValuationDistribution):
    """Beta(a, b) rescaled from [0, 1] to [0, vbar]."""

    a: float
    b: float
    vbar: float
    kind = "beta"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DegenerateDistribution("shape parameters must be positive")
        self._check_width()

    @property
    def lower(self):
        return 0.0

    @property
    def upper(self):
        return float(self.vbar)

    @property
    def _log_norm(self):
        return special.betaln(self.a, self.b) + math.log(self.vbar)

    def _cdf(self, v):
        return special.betainc(self.a, self.b, v / self.vbar)

    def _pdf(self, v):
        x = v / self.vbar
        with np.errstate(divide="ignore"):
            log_kernel = (special.xlogy(self.a - 1, x)
                          + special.xlog1py(self.b - 1, -x))
        return np.exp(log_kernel - self._log_norm)

    def _pdf_slope(self, v):
        x = v / self.vbar
        a, b = self.a, self.b
        left = 0.0 if a == 1 else (a - 1) * x ** (a - 2) * (1 - x) ** (b - 1)
        right = 0.0 if b == 1 else (b - 1) * x ** (a - 1) * (1 - x) ** (b - 2)
        norm = math.exp(special.betaln(a, b)) * self.vbar ** 2
        return (left - right) / norm + np.zeros_like(x)

    def _quantile(self, u):
        return special.betaincinv(self.a, self.b, u) * self.vbar

    def to_dict(self):
        return {"kind": "beta", "a": self.a, "b": self.b, "vbar": self.upper}


def distribution_from_dict(spec: dict) -> ValuationDistribution:
    """Build a distribution from its JSON literal."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("distribution: expected an object with a 'kind' field")
    kind = spec["kind"]
    required = {
        "uniform": ("vbar",),
        "trunc_normal": ("mu", "sigma", "lo", "hi"),
        "exponential": ("rate", "vbar"),
        "beta": ("a", "b", "vbar"),
    }
    if kind not in required:
        raise ConfigError(f"distribution.kind: unknown kind {kind!r}")
    for key in required[kind]:
        if key not in spec:
            raise ConfigError(f"distribution.{key}: missing for kind {kind!r}")
        if not isinstance(spec[key], (int, float)) or isinstance(spec[key], bool):
            raise ConfigError(f"distribution.{key}: expected a number")
    args = [float(spec[k]) for k in required[kind]]
    try:
        return {"uniform": Uniform, "trunc_normal": TruncatedNormal,
                "exponential": Exponential, "beta": Beta}[kind](*args)
    except DegenerateDistribution as exc:
        raise ConfigError(f"distribution: {exc}") from exc


def cdf(dist: ValuationDistribution, v):
    return dist.cdf(v)


def _max_convexity(values: np.ndarray) -> float:
    second = values[2:] - 2.0 * values[1:-1] + values[:-2]
    return float(max(0.0, second.max()))


@dataclass(frozen=True)
class AssumptionReport:
    cdf_concave: bool
    cdf_violation: float
    revenue_concave: bool
    revenue_violation: float
    monopoly_price: float
    notes: str = ""


def _revenue_check(dist, grid_points=1025):
    prices = np.linspace(dist.lower, dist.upper, grid_points)
    revenue = prices * (1.0 - dist.cdf(prices))
    violation = _max_convexity(revenue)
    return violation <= 1e-12 * max(1.0, dist.upper), violation


def monopoly_price(dist: ValuationDistribution) -> float:
    """Maximizer of p(1 - F(p)) over the support."""
    if isinstance(dist, Uniform):
        return dist.upper / 2.0

    def marginal(p):
        return 1.0 - dist.cdf(p) - p * dist.pdf(p)

    concave, _ = _revenue_check(dist)
    if concave:
        lo, hi = dist.lower, dist.upper
        if marginal(lo) <= 0:
            return lo
        if marginal(hi) >= 0:
            return hi
        return optimize.brentq(marginal, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)

    warnings.warn(f"{dist.kind}: revenue p(1-F(p)) is not concave; "
                  "using grid search", RuntimeWarning, stacklevel=2)
    grid = np.linspace(dist.lower, dist.upper, 20001)
    k = int(np.argmax(grid * (1.0 - dist.cdf(grid))))
    left, right = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if left < right and marginal(left) > 0 > marginal(right):
        return optimize.brentq(marginal, left, right, xtol=1e-14, rtol=1e-15)
    return float(grid[k])


def check_assumption_a1(dist: ValuationDistribution, grid_points: int = 1001) -> AssumptionReport:
    """Second-difference scan for concavity of F and of p(1 - F(p))."""
    if grid_points < 16:
        raise ValueError("grid_points must be at least 16")
    grid = np.linspace(dist.lower, dist.upper, grid_points)
    cdf_violation = _max_convexity(dist.cdf(grid))
    revenue_ok, revenue_violation = _revenue_check(dist, grid_points)
    cdf_ok = cdf_violation <= 1e-12
    notes = []
    if not cdf_ok:
        notes.append("CDF has convex stretches")
    if not revenue_ok:
        notes.append("revenue curve has convex stretches")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        price = monopoly_price(dist)
    return AssumptionReport(cdf_ok, cdf_violation, revenue_ok, revenue_violation,
                            price, "; ".join(notes) or "ok")


def sample(dist: ValuationDistribution, seed: int, count: int) -> np.ndarray:
    """Inverse-CDF draws; identical for identical seeds."""
    if count < 1:
        raise ValueError("count must be at least 1")
    uniforms = np.random.Generator(np.random.PCG64(seed)).random(count)
    return np.asarray(dist.quantile(uniforms))


def ks_statistic(samples, cdf_func) -> float:
    """Two-sided Kolmogorov-Smirnov distance to a continuous CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    fitted = np.asarray(cdf_func(x), dtype=float)
    ranks = np.arange(1, n + 1)
    above = np.max(ranks / n - fitted)
    below = np.max(fitted - (ranks - 1) / n)
    return float(max(above, below))


def ks_critical_value(count: int, level: float = 0.05) -> float:
    """Asymptotic critical value c(level) / sqrt(count)."""
    return math.sqrt(-0.5 * math.log(level / 2.0)) / math.sqrt(count)


@dataclass(frozen=True)
class TruncatedNormalFit:
    distribution: TruncatedNormal
    ks_statistic: float
    ks_critical_5pct: float
    log_likelihood: float
    count: int
    sigma_at_bound: bool


def _log_mass(alpha, beta):
    if alpha > 0:
        return math.log(special.ndtr(-alpha) - special.ndtr(-beta))
    return math.log(special.ndtr(beta) - special.ndtr(alpha))


def fit_truncated_normal(samples, lo: float, hi: float) -> TruncatedNormalFit:
    """Maximum-likelihood fit of a normal law truncated to [lo, hi]."""
    x = np.asarray(samples, dtype=float)
    if x.size < 10:
        raise InsufficientData(f"need at least 10 samples, got {x.size}")
    if not hi > lo:
        raise DegenerateDistribution("hi must exceed lo")
    if np.any(x < lo) or np.any(x > hi):
        raise OutOfSupport(f"samples must lie within [{lo}, {hi}]")
    spread = float(np.std(x))
    if spread < 1e-9:
        raise NonFiniteLikelihood("sample spread is zero; sigma collapses")

    width = hi - lo
    log_sigma_cap = math.log(1e3 * width)

    def negative_log_likelihood(theta):
        mu, log_sigma = theta
        sigma = math.exp(log_sigma)
        z = (x - mu) / sigma
        try:
            log_mass = _log_mass((lo - mu) / sigma, (hi - mu) / sigma)
        except ValueError:
            return math.inf
        return (0.5 * float(z @ z) + x.size * (log_sigma + log_mass)
                + 0.5 * x.size * math.log(2 * math.pi))

    start = np.array([float(np.mean(x)), math.log(spread)])
    bounds = [(lo - 10 * width, hi + 10 * width), (math.log(1e-12), log_sigma_cap)]
    result = optimize.minimize(negative_log_likelihood, start, method="L-BFGS-B",
                               bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-10})
    polish = optimize.minimize(negative_log_likelihood, result.x, method="Nelder-Mead",
                               options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    best = polish if polish.fun <= result.fun else result
    mu, log_sigma = best.x
    log_sigma = min(log_sigma, log_sigma_cap)
    sigma = math.exp(log_sigma)
    if not math.isfinite(best.fun) or sigma < 1e-9:
        raise NonFiniteLikelihood("likelihood is not finite at the optimum")
    fitted = TruncatedNormal(float(mu), sigma, float(lo), float(hi))
    return TruncatedNormalFit(
        distribution=fitted,
        ks_statistic=ks_statistic(x, fitted.cdf),
        ks_critical_5pct=ks_critical_value(x.size),
        log_likelihood=-float(best.fun),
        count=int(x.size),
        sigma_at_bound=log_sigma >= log_sigma_cap - 1e-6,
    )
