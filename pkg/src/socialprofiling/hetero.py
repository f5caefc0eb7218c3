"""Heterogeneous users: preference types and partially connected networks.

Two extensions of the homogeneous market live here.

Preference types. A type-k user values social activity with weight alpha_k,
so the type's threshold solves

    v_k = min(vbar, p0 + (alpha_k / delta) * E ln(m + omega0)),

where m ~ Binomial(n-1, q) and q = sum_k gamma_k F(v_k) is the chance that
a random peer is active. Every v_k is a function of the single scalar q,
so the fixed point is searched in q.

Networks. Each node only benefits from its neighbours, whose activity is a
sum of independent Bernoulli(F(v_j)) draws. The node-level price rule
p_i = (vbar - delta v_i) / (2(1-delta)) can be substituted into the node's
threshold equation, leaving one monotone equation per node.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .errors import (
    EmptyGraph,
    MultipleFixedPoints,
    NonConvergence,
    ParseError,
    PriceExceedsThreshold,
    UnsupportedDistribution,
)
from .pbe import MarketConfig, _check_accuracy, solve_pbe
from .social import expected_log_count

__all__ = [
    "TypeProfile",
    "HeteroEquilibrium",
    "SocialGraph",
    "NetworkEquilibrium",
    "DegreeReport",
    "solve_type_thresholds",
    "hetero_uniform_price",
    "solve_hetero_pbe",
    "poisson_binomial_pmf",
    "neighbour_benefit",
    "load_graph",
    "solve_network_pbe",
    "degree_threshold_report",
]

PLAIN_STEPS = 200
BRACKET_POINTS = 1025


@dataclass(frozen=True)
class TypeProfile:
    alphas: tuple
    gammas: tuple

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        gammas = tuple(float(g) for g in self.gammas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "gammas", gammas)
        if len(alphas) == 0 or len(alphas) != len(gammas):
            raise ValueError("alphas and gammas must be non-empty and of equal length")
        if any(a < 0 or not math.isfinite(a) for a in alphas):
            raise ValueError("preference weights must be finite and non-negative")
        if any(g < 0 for g in gammas) or abs(sum(gammas) - 1.0) > 1e-12:
            raise ValueError("type probabilities must be non-negative and sum to 1")

    @property
    def K(self) -> int:
        return len(self.alphas)

    @classmethod
    def single(cls) -> "TypeProfile":
        return cls((1.0,), (1.0,))

    def to_dict(self) -> dict:
        return {"alphas": list(self.alphas), "gammas": list(self.gammas)}


@dataclass(frozen=True)
class HeteroEquilibrium:
    v_stars: tuple
    p0: float
    converged: bool
    residual: float
    iterations: int
    price_bound_ok: bool

    def to_dict(self) -> dict:
        return {"v_stars": list(self.v_stars), "p0": self.p0,
                "converged": self.converged, "residual": self.residual,
                "iterations": self.iterations, "price_bound_ok": self.price_bound_ok}


def _require_uniform(cfg):
    if not cfg.is_uniform:
        raise UnsupportedDistribution("this solver is derived for uniform valuations")


# ----------------------------------------------------------------- types

def _type_thresholds_at(cfg, types, p0, q):
    benefit = expected_log_count(cfg.n - 1, q, cfg.omega0)
    alphas = np.asarray(types.alphas)
    return np.minimum(cfg.vbar, p0 + alphas * benefit / cfg.delta)


def _peer_activity(cfg, types, v):
    return float(np.dot(types.gammas, cfg.dist.cdf(np.asarray(v))))


def _monotone_limit(step, start, upward, tol, max_iter):
    """Limit of q <- step(q) from start, iterating plainly and then bracketing.

    The map is non-decreasing, so the iterates move monotonically towards
    the nearest fixed point on their side. After a short run of plain steps
    the remaining distance is closed by scanning for the first sign change
    of step(q) - q and bisecting it.
    """
    q = start
    for _ in range(min(PLAIN_STEPS, max_iter)):
        nxt = step(q)
        if abs(nxt - q) <= tol:
            return nxt
        q = nxt
    gap = lambda x: step(x) - x
    edge = 1.0 if upward else 0.0
    grid = np.linspace(q, edge, BRACKET_POINTS)
    values = [gap(x) for x in grid]
    for k in range(1, len(grid)):
        if (values[k] <= 0.0) if upward else (values[k] >= 0.0):
            lo, hi = sorted((grid[k - 1], grid[k]))
            if values[k] == 0.0:
                return grid[k]
            try:
                return optimize.bisect(gap, lo, hi, xtol=tol, rtol=1e-15, maxiter=max_iter)
            except RuntimeError as exc:
                raise NonConvergence(f"bracketed fixed point did not converge: {exc}",
                                     last=q) from exc
    return edge


def solve_type_thresholds(cfg: MarketConfig, types: TypeProfile, p0: float) -> list:
    """Per-type thresholds at a fixed uniform price."""
    if not cfg.delta > 0:
        raise ValueError("delta must be positive")
    if p0 < 0:
        raise ValueError("p0 must be non-negative")

    def step(q):
        return _peer_activity(cfg, types, _type_thresholds_at(cfg, types, p0, q))

    # the all-p0 and all-vbar starts, expressed in peer activity
    low_start = cfg.dist.cdf(min(p0, cfg.vbar))
    lower_q = _monotone_limit(step, low_start, True, cfg.tol, cfg.max_iter)
    upper_q = _monotone_limit(step, 1.0, False, cfg.tol, cfg.max_iter)
    lower = _type_thresholds_at(cfg, types, p0, lower_q)
    upper = _type_thresholds_at(cfg, types, p0, upper_q)
    if np.max(np.abs(upper - lower)) > 10.0 * cfg.tol * max(1.0, cfg.vbar):
        raise MultipleFixedPoints("lower and upper threshold limits differ",
                                  lower=lower.tolist(), upper=upper.tolist())
    return upper.tolist()


def type_threshold_residual(cfg, types, p0, v_stars) -> float:
    """Largest violation of the per-type threshold equations."""
    v = np.asarray(v_stars, dtype=float)
    target = _type_thresholds_at(cfg, types, p0, _peer_activity(cfg, types, v))
    return float(np.max(np.abs(v - target)))


def hetero_uniform_price(cfg: MarketConfig, types: TypeProfile, v_stars,
                         weighting: str = "harmonic", check: bool = True) -> float:
    """Seller's uniform price against a population of type thresholds.

    ``harmonic`` maximises the prior-weighted sum of the per-type posterior
    revenues. ``posterior`` maximises revenue under the pooled posterior of
    the non-profiled population, which weights each type by its chance of
    escaping profiling.
    """
    _require_uniform(cfg)
    vbar, delta = cfg.vbar, cfg.delta
    v = np.asarray(v_stars, dtype=float)
    gammas = np.asarray(types.gammas)
    if weighting == "harmonic":
        price = 1.0 / (2.0 * np.sum(gammas * (1.0 - delta) / (vbar - delta * v)))
    elif weighting == "posterior":
        price = (vbar - delta * np.dot(gammas, v)) / (2.0 * (1.0 - delta))
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    price = float(price)
    if check and not price < np.min(v):
        raise PriceExceedsThreshold(
            f"price {price:.6g} is not below the smallest threshold {np.min(v):.6g}")
    return price


def solve_hetero_pbe(cfg: MarketConfig, types: TypeProfile,
                     weighting: str = "harmonic") -> HeteroEquilibrium:
    """Alternate thresholds and price until both settle.

    When price updates start alternating in sign the step is damped, halving
    the damping factor each time the alternation persists.
    """
    _require_uniform(cfg)
    _check_accuracy(cfg)
    try:
        price = solve_pbe(cfg).p0_star
    except Exception:
        price = cfg.vbar / 2.0
    damping, last_move, residual = 1.0, 0.0, math.inf
    v = solve_type_thresholds(cfg, types, price)
    for iteration in range(1, cfg.max_iter + 1):
        target = hetero_uniform_price(cfg, types, v, weighting, check=False)
        move = target - price
        residual = abs(move)
        if residual <= cfg.tol * max(1.0, cfg.vbar):
            break
        if move * last_move < 0:
            damping = 0.5 if damping == 1.0 else damping / 2.0
        price = min(max(price + damping * move, 0.0), cfg.vbar)
        last_move = move
        v = solve_type_thresholds(cfg, types, price)
    else:
        raise NonConvergence("price and thresholds did not settle",
                             last={"v_stars": v, "p0": price, "residual": residual})
    residual = max(residual, type_threshold_residual(cfg, types, price, v))
    return HeteroEquilibrium(tuple(v), price, True, residual, iteration,
                             bool(price < min(v)))


# --------------------------------------------------------------- network

@dataclass(frozen=True)
class SocialGraph:
    """Undirected simple graph on nodes 0..n_nodes-1."""

    n_nodes: int
    edges: tuple
    labels: tuple = ()
    duplicates_dropped: int = 0
    self_loops_dropped: int = 0
    neighbours: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adjacency = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes) or i == j:
                raise ValueError(f"bad edge ({i}, {j})")
            adjacency[i].append(j)
            adjacency[j].append(i)
        object.__setattr__(self, "neighbours", tuple(tuple(sorted(a)) for a in adjacency))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(self.n_nodes)))

    @classmethod
    def from_edges(cls, pairs, n_nodes: int | None = None) -> "SocialGraph":
        """Build from (i, j) pairs with ids in 0..n_nodes-1, dropping repeats."""
        seen, loops, dupes = set(), 0, 0
        for i, j in pairs:
            i, j = int(i), int(j)
            if i == j:
                loops += 1
                continue
            key = (min(i, j), max(i, j))
            if key in seen:
                dupes += 1
                continue
            seen.add(key)
        if n_nodes is None:
            n_nodes = 1 + max((j for _, j in seen), default=-1)
        return cls(n_nodes, tuple(sorted(seen)), (), dupes, loops)

    @classmethod
    def complete(cls, n_nodes: int) -> "SocialGraph":
        return cls.from_edges(((i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)),
                              n_nodes)

    @property
    def degrees(self) -> list:
        return [len(a) for a in self.neighbours]

    @property
    def average_degree(self) -> float:
        return 2.0 * len(self.edges) / self.n_nodes if self.n_nodes else 0.0

    def adjacency_matrix(self) -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_nodes), dtype=int)
        for i, j in self.edges:
            out[i, j] = out[j, i] = 1
        return out


def load_graph(path) -> SocialGraph:
    """Read a whitespace edge list; ``#`` starts a comment.

    Node ids may be any non-negative integers and are re-indexed densely in
    increasing order.
    """
    pairs = []
    with open(Path(path), encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ParseError(f"expected two node ids, got {len(tokens)} fields", number)
            try:
                a, b = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise ParseError(f"node ids must be integers: {line!r}", number) from None
            if a < 0 or b < 0:
                raise ParseError("node ids must be non-negative", number)
            pairs.append((a, b))
    if not pairs:
        raise EmptyGraph(f"{path}: no edges")
    labels = sorted({x for pair in pairs for x in pair})
    index = {label: k for k, label in enumerate(labels)}
    dense = SocialGraph.from_edges(((index[a], index[b]) for a, b in pairs), len(labels))
    graph = SocialGraph(dense.n_nodes, dense.edges, tuple(labels),
                        dense.duplicates_dropped, dense.self_loops_dropped)
    if graph.duplicates_dropped or graph.self_loops_dropped:
        warnings.warn(f"{path}: dropped {graph.duplicates_dropped} duplicate and "
                      f"{graph.self_loops_dropped} self-loop edges", RuntimeWarning,
                      stacklevel=2)
    return graph


def poisson_binomial_pmf(probs) -> np.ndarray:
    """pmf of a sum of independent Bernoulli(probs[j]) by the O(d^2) recursion."""
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for j, p in enumerate(probs, start=1):
        pmf[1:j + 1] = pmf[1:j + 1] * (1.0 - p) + pmf[:j] * p
        pmf[0] *= 1.0 - p
    return pmf


def neighbour_benefit(probs, omega0: float) -> float:
    """E ln(active neighbours + omega0)."""
    pmf = poisson_binomial_pmf(probs)
    return float(pmf @ np.log(np.arange(len(pmf)) + omega0))


@dataclass(frozen=True)
class NetworkEquilibrium:
    v_stars: tuple
    p0s: tuple
    residuals: tuple
    iterations: int
    single_price: bool = False

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0

    def to_dict(self) -> dict:
        return {"v_stars": list(self.v_stars), "p0s": list(self.p0s),
                "residuals": list(self.residuals), "iterations": self.iterations,
                "single_price": self.single_price}


def _benefits(cfg, graph, v):
    """Neighbour benefit per node; nodes with identical neighbour states share one DP."""
    probs = cfg.dist.cdf(np.asarray(v))
    cache, out = {}, np.empty(graph.n_nodes)
    for i, nbrs in enumerate(graph.neighbours):
        key = tuple(sorted(probs[list(nbrs)])) if nbrs else ()
        if key not in cache:
            cache[key] = neighbour_benefit(key, cfg.omega0)
        out[i] = cache[key]
    return out


def _node_price(cfg, v):
    return (cfg.vbar - cfg.delta * np.asarray(v)) / (2.0 * (1.0 - cfg.delta))


def _iterate_nodes(update, start, cfg):
    v = np.asarray(start, dtype=float)
    for iteration in range(1, cfg.max_iter + 1):
        nxt = update(v)
        if np.max(np.abs(nxt - v)) <= cfg.tol * max(1.0, cfg.vbar):
            return nxt, iteration
        v = nxt
    raise NonConvergence("node thresholds did not settle", last=v.tolist())


def _two_sided(update, cfg, n_nodes, low):
    lower, it_low = _iterate_nodes(update, np.full(n_nodes, low), cfg)
    upper, it_high = _iterate_nodes(update, np.full(n_nodes, cfg.vbar), cfg)
    if np.max(np.abs(upper - lower)) > 10.0 * cfg.tol * max(1.0, cfg.vbar):
        raise MultipleFixedPoints("lower and upper node limits differ",
                                  lower=lower.tolist(), upper=upper.tolist())
    return upper, it_low + it_high


def _single_price(cfg, v):
    return float(1.0 / (2.0 * np.mean((1.0 - cfg.delta) / (cfg.vbar - cfg.delta * v))))


def solve_network_pbe(cfg: MarketConfig, graph: SocialGraph,
                      single_price: bool = False) -> NetworkEquilibrium:
    """Per-node thresholds and prices on a known social graph.

    With ``single_price`` the seller posts one price, the equal-weight
    harmonic rule over all nodes, instead of one price per node.
    """
    _require_uniform(cfg)
    _check_accuracy(cfg)
    if graph.n_nodes == 0:
        raise EmptyGraph("graph has no nodes")
    vbar, delta = cfg.vbar, cfg.delta
    if not single_price:
        def update(v):
            b = _benefits(cfg, graph, v)
            return np.minimum(vbar, (vbar + 2.0 * (1.0 - delta) * b / delta) / (2.0 - delta))

        v, iterations = _two_sided(update, cfg, graph.n_nodes, 0.0)
        prices = _node_price(cfg, v)
        b = _benefits(cfg, graph, v)
        residuals = np.abs(v - np.minimum(vbar, prices + b / delta))
        return NetworkEquilibrium(tuple(v.tolist()), tuple(prices.tolist()),
                                  tuple(residuals.tolist()), iterations, False)

    price = _single_price(cfg, np.full(graph.n_nodes, vbar))
    damping, last_move, iterations = 1.0, 0.0, 0
    for _ in range(cfg.max_iter):
        def update(v, price=price):
            return np.minimum(vbar, price + _benefits(cfg, graph, v) / delta)

        v, used = _two_sided(update, cfg, graph.n_nodes, price)
        iterations += used
        move = _single_price(cfg, v) - price
        if abs(move) <= cfg.tol * max(1.0, vbar):
            break
        if move * last_move < 0:
            damping /= 2.0
        price += damping * move
        last_move = move
    else:
        raise NonConvergence("single price did not settle", last=price)
    b = _benefits(cfg, graph, v)
    residuals = np.maximum(np.abs(v - np.minimum(vbar, price + b / delta)), abs(move))
    return NetworkEquilibrium(tuple(v.tolist()), tuple([price] * graph.n_nodes),
                              tuple(residuals.tolist()), iterations, True)


@dataclass(frozen=True)
class DegreeReport:
    rows: tuple
    spearman: float
    constant: bool

    HEADER = ("node", "degree", "v_star", "p0")


def degree_threshold_report(eq: NetworkEquilibrium, graph: SocialGraph) -> DegreeReport:
    """Rows (node, degree, v_star, p0) by descending degree, plus rank correlation.

    A constant degree or threshold vector has no rank correlation; it is
    reported as 1.0 with ``constant`` set.
    """
    degrees = np.asarray(graph.degrees, dtype=float)
    v = np.asarray(eq.v_stars)
    order = sorted(range(graph.n_nodes), key=lambda i: (-degrees[i], i))
    rows = tuple((graph.labels[i], int(degrees[i]), float(v[i]), float(eq.p0s[i]))
                 for i in order)
    scale = max(1.0, float(np.max(np.abs(v)))) if len(v) else 1.0
    constant = len(v) < 2 or np.ptp(degrees) == 0 or np.ptp(v) <= 1e-12 * scale
    if constant:
        return DegreeReport(rows, 1.0, True)
    return DegreeReport(rows, float(stats.spearmanr(degrees, v).statistic), False)
