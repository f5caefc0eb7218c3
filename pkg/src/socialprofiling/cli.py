"""Command-line driver: read a JSON scenario, run a solver, write tables.

    socialprofiling solve|sweep|simulate|compare|network|hetero|fit|check \\
        scenario.json [--out PREFIX] [--format csv|json]

Exit codes: 0 success, 1 bad configuration, 2 solver failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dist as dist_mod
from .errors import ConfigError, InputError, NoEquilibriumFound, ProfilingError, SolverError
from .fourstage import compare_models, solve_four_stage
from .hetero import (
    TypeProfile,
    degree_threshold_report,
    load_graph,
    solve_hetero_pbe,
    solve_network_pbe,
)
from .pbe import (
    MarketConfig,
    classify_regime,
    equilibrium_residual,
    solve_equilibrium,
)
from .sim import (
    StrategyProfile,
    benchmark_comparison,
    simulate_market,
    simulate_paired,
    variance_comparison,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

MODELS = ("three_stage", "four_stage", "network", "hetero")
SWEEP_PARAMETERS = ("delta", "vbar", "n", "omega0")
FORMATS = ("csv", "json")

EQUILIBRIUM_HEADER = ("model", "v_star", "p0_star", "case", "regime", "residual",
                      "revenue_profiled", "revenue_nonprofiled", "revenue_total",
                      "fraction_active")
SWEEP_HEADER = ("parameter", "value", "v_star", "p0_star", "case", "regime",
                "fraction_active", "error")
METRIC_HEADER = ("metric", "value")
NETWORK_HEADER = ("node", "degree", "v_star", "p0")
HETERO_HEADER = ("type", "alpha", "gamma", "v_star", "p0")
MODELS_HEADER = ("delta", "three_stage_revenue", "four_stage_revenue", "ratio_closed_form",
                 "bound", "mean_ratio", "mean_ratio_se", "var_ratio", "std_ratio",
                 "three_stage_std", "three_stage_min", "three_stage_max",
                 "four_stage_std", "four_stage_min", "four_stage_max", "error")
MECHANISM_HEADER = ("delta", "mechanism", "mean_revenue", "se_revenue", "improvement_vs_pip",
                    "improvement_se", "closed_form_revenue", "closed_form_improvement",
                    "improvement_vs_tpp", "improvement_vs_tpp_se",
                    "closed_form_improvement_vs_tpp")
SERIES_HEADER = ("run", "revenue", "profiled_revenue", "nonprofiled_revenue")


# ------------------------------------------------------------ scenario

@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    points: int

    def values(self):
        grid = np.linspace(self.start, self.stop, self.points)
        if self.parameter == "n":
            return [int(round(x)) for x in grid]
        return [float(x) for x in grid]


@dataclass(frozen=True)
class SimSpec:
    seed: int
    runs: int
    paired: bool = False
    keep_series: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    market: MarketConfig
    model: str
    sweep: SweepSpec | None
    sim: SimSpec | None
    prefix: str
    format: str
    raw: dict
    base: Path

    def block(self, name: str) -> dict:
        value = self.raw.get(name)
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: missing or not an object")
        return value

    def path(self, name: str, key: str = "path") -> Path:
        value = self.block(name).get(key)
        if not isinstance(value, str):
            raise ConfigError(f"{name}.{key}: expected a file path")
        path = Path(value)
        return path if path.is_absolute() else self.base / path

    def require_sim(self) -> SimSpec:
        if self.sim is None:
            raise ConfigError("sim: missing (needs seed and runs)")
        return self.sim


def _number(block, key, where, kind=float, default=None):
    value = block.get(key, default)
    if value is None:
        raise ConfigError(f"{where}.{key}: missing")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{where}.{key}: expected an integer")
        return int(value)
    return float(value)


def _parse_sweep(data):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError("sweep: expected an object")
    parameter = data.get("parameter")
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep.parameter: expected one of {', '.join(SWEEP_PARAMETERS)}")
    points = _number(data, "points", "sweep", int)
    if points < 2:
        raise ConfigError("sweep.points: must be at least 2")
    return SweepSpec(parameter, _number(data, "from", "sweep"), _number(data, "to", "sweep"),
                     points)


def _parse_sim(data):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError("sim: expected an object")
    if "seed" not in data:
        raise ConfigError("sim.seed: missing (randomness needs an explicit seed)")
    seed = _number(data, "seed", "sim", int)
    runs = _number(data, "runs", "sim", int)
    if seed < 0:
        raise ConfigError("sim.seed: must be non-negative")
    if runs < 1:
        raise ConfigError("sim.runs: must be at least 1")
    for key in ("paired", "keep_series"):
        if not isinstance(data.get(key, False), bool):
            raise ConfigError(f"sim.{key}: expected true or false")
    return SimSpec(seed, runs, data.get("paired", False), data.get("keep_series", False))


def load_scenario(path, out: str | None = None, fmt: str | None = None) -> ScenarioConfig:
    """Parse a scenario file; ConfigError messages name the offending field."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data, path.parent, default_prefix=str(path.with_suffix("")),
                              out=out, fmt=fmt)


def scenario_from_dict(data, base=Path("."), default_prefix="scenario", out=None, fmt=None):
    if not isinstance(data, dict):
        raise ConfigError("scenario: expected a JSON object")
    market = MarketConfig.from_dict(data.get("market"))
    model = data.get("model", "three_stage")
    if model not in MODELS:
        raise ConfigError(f"model: expected one of {', '.join(MODELS)}")
    output = data.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output: expected an object")
    prefix = out or output.get("prefix") or default_prefix
    if not isinstance(prefix, str):
        raise ConfigError("output.prefix: expected a string")
    if out is None and "prefix" in output and not Path(prefix).is_absolute():
        prefix = str(Path(base) / prefix)
    form = fmt or output.get("format", "csv")
    if form not in FORMATS:
        raise ConfigError("output.format: expected csv or json")
    return ScenarioConfig(market, model, _parse_sweep(data.get("sweep")),
                          _parse_sim(data.get("sim")), prefix, form, data, Path(base))


# -------------------------------------------------------------- writers

def _cell(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(x) for x in row])


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, default=_jsonable)
        handle.write("\n")


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _emit(scenario, suffix, header, rows, extra=None):
    """Write rows as CSV or, in JSON mode, as a list of records plus the market."""
    target = Path(f"{scenario.prefix}_{suffix}.{scenario.format}")
    target.parent.mkdir(parents=True, exist_ok=True)
    if scenario.format == "csv":
        write_table(target, header, rows)
    else:
        payload = {"market": scenario.market.to_dict(), "model": scenario.model,
                   "rows": [dict(zip(header, row)) for row in rows]}
        payload.update(extra or {})
        write_json(target, payload)
    return target


def _metrics_rows(metrics: dict):
    return [(key, value) for key, value in metrics.items()]


# ------------------------------------------------------------- commands

def _regime(cfg):
    try:
        return classify_regime(cfg).regime.value
    except (ProfilingError, ValueError):
        return None


def _three_stage_row(cfg):
    outcome = solve_equilibrium(cfg)
    regime = _regime(cfg) if 0.0 < cfg.delta < 1.0 else None
    row = ("three_stage", outcome.v_star, outcome.p0_star, outcome.case.value, regime,
           outcome.residual, outcome.expected_revenue_profiled,
           outcome.expected_revenue_nonprofiled, outcome.total_revenue,
           outcome.fraction_active)
    return outcome, row


def cmd_solve(scenario: ScenarioConfig) -> int:
    cfg = scenario.market
    if scenario.model == "network":
        return cmd_network(scenario)
    if scenario.model == "hetero":
        return cmd_hetero(scenario)
    if scenario.model == "four_stage":
        four = solve_four_stage(cfg)
        row = ("four_stage", four.v_e, four.p0_e, four.case.value, _regime(cfg), 0.0,
               four.revenue_profiled, four.revenue_nonprofiled, four.total_expected_revenue,
               cfg.dist.cdf(four.v_e))
        _emit(scenario, "equilibrium", EQUILIBRIUM_HEADER, [row],
              {"equilibrium": four.to_dict()})
        return EXIT_OK
    outcome, row = _three_stage_row(cfg)
    _emit(scenario, "equilibrium", EQUILIBRIUM_HEADER, [row],
          {"equilibrium": outcome.to_dict(), "regime": row[4]})
    return EXIT_OK


def _swept(cfg, parameter, value):
    if parameter == "delta":
        return cfg.with_delta(value)
    social = cfg.social
    if parameter == "vbar":
        dist = dist_mod.distribution_from_dict({**cfg.dist.to_dict(), "vbar": value}) \
            if cfg.is_uniform else None
        if dist is None:
            raise ConfigError("sweep.parameter: vbar sweeps need a uniform distribution")
        return cfg.replace(social=type(social)(social.n, social.omega0, dist))
    if parameter == "n":
        return cfg.replace(social=type(social)(int(value), social.omega0, social.dist))
    return cfg.replace(social=type(social)(social.n, value, social.dist))


def cmd_sweep(scenario: ScenarioConfig) -> int:
    if scenario.sweep is None:
        raise ConfigError("sweep: missing")
    spec = scenario.sweep
    rows, solved = [], 0
    for value in spec.values():
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cfg = _swept(scenario.market, spec.parameter, value)
                if scenario.model == "four_stage":
                    four = solve_four_stage(cfg)
                    v, p0, case = four.v_e, four.p0_e, four.case.value
                else:
                    outcome = solve_equilibrium(cfg)
                    v, p0, case = outcome.v_star, outcome.p0_star, outcome.case.value
                regime = _regime(cfg) if 0.0 < cfg.delta < 1.0 else None
            rows.append((spec.parameter, value, v, p0, case, regime, cfg.dist.cdf(v), None))
            solved += 1
        except ConfigError:
            raise
        except (ProfilingError, ValueError) as exc:
            rows.append((spec.parameter, value, None, None, None, None, None,
                         f"{type(exc).__name__}: {exc}"))
    _emit(scenario, "sweep", SWEEP_HEADER, rows)
    return EXIT_OK if solved else EXIT_SOLVER


def _model_equilibrium(cfg, model):
    if model == "four_stage":
        four = solve_four_stage(cfg)
        return four.v_e, four.p0_e
    outcome = solve_equilibrium(cfg)
    return outcome.v_star, outcome.p0_star


def cmd_simulate(scenario: ScenarioConfig) -> int:
    sim = scenario.require_sim()
    cfg = scenario.market
    if sim.paired:
        v3, p3 = _model_equilibrium(cfg, "three_stage")
        v4, p4 = _model_equilibrium(cfg, "four_stage")
        paired = simulate_paired(cfg, p3, StrategyProfile.threshold(v3), cfg, p4,
                                 StrategyProfile.threshold(v4), sim.seed, sim.runs)
        metrics = {f"three_stage_{k}": v for k, v in paired.first.metrics().items()}
        metrics.update({f"four_stage_{k}": v for k, v in paired.second.metrics().items()})
        metrics.update({"mean_difference": paired.mean_difference,
                        "se_difference": paired.se_difference,
                        "var_paired_difference": paired.var_paired_difference,
                        "var_unpaired_difference": paired.var_unpaired_difference})
        report = paired.first
    else:
        v, p0 = _model_equilibrium(cfg, scenario.model)
        report = simulate_market(cfg, p0, StrategyProfile.threshold(v), sim.seed, sim.runs,
                                 keep_series=sim.keep_series)
        metrics = {"v_star": v, "p0": p0, **report.metrics()}
    _emit(scenario, "simulation", METRIC_HEADER, _metrics_rows(metrics), {"metrics": metrics})
    if sim.keep_series and report.series is not None:
        series = report.series
        profiled = report.profiled_series
        write_table(f"{scenario.prefix}_series.csv", SERIES_HEADER,
                    [(k, float(series[k]), float(profiled[k]),
                      float(series[k] - profiled[k])) for k in range(len(series))])
    return EXIT_OK


def cmd_compare(scenario: ScenarioConfig) -> int:
    sim = scenario.require_sim()
    cfg = scenario.market
    if scenario.sweep is not None and scenario.sweep.parameter == "delta":
        deltas = scenario.sweep.values()
    else:
        deltas = [cfg.delta]
    model_rows, mechanism_rows = [], []
    for delta in deltas:
        local = cfg.with_delta(delta)
        try:
            closed = compare_models(local)
            var = variance_comparison(local, sim.seed, sim.runs)
            three, four = var.three_stage, var.four_stage
            model_rows.append((delta, closed.three_stage_revenue, closed.four_stage_revenue,
                               closed.ratio_total, closed.bound, var.mean_ratio,
                               var.mean_ratio_se, var.var_ratio, var.std_ratio,
                               three.std_revenue, three.min_revenue, three.max_revenue,
                               four.std_revenue, four.min_revenue, four.max_revenue, None))
        except (ProfilingError, ValueError) as exc:
            model_rows.append((delta,) + (None,) * 14 + (f"{type(exc).__name__}: {exc}",))
        for row in benchmark_comparison(local, sim.seed, sim.runs):
            mechanism_rows.append((delta, row.mechanism, row.mean_revenue, row.se_revenue,
                                   row.improvement_vs_pip, row.improvement_se,
                                   row.closed_form_revenue, row.closed_form_improvement,
                                   row.improvement_vs_tpp, row.improvement_vs_tpp_se,
                                   row.closed_form_improvement_vs_tpp))
    _emit(scenario, "models", MODELS_HEADER, model_rows)
    _emit(scenario, "mechanisms", MECHANISM_HEADER, mechanism_rows)
    return EXIT_OK


def cmd_network(scenario: ScenarioConfig) -> int:
    graph_block = scenario.block("graph")
    single = graph_block.get("single_price", False)
    if not isinstance(single, bool):
        raise ConfigError("graph.single_price: expected true or false")
    graph = load_graph(scenario.path("graph"))
    eq = solve_network_pbe(scenario.market, graph, single_price=single)
    report = degree_threshold_report(eq, graph)
    summary = {"nodes": graph.n_nodes, "edges": len(graph.edges),
               "average_degree": graph.average_degree,
               "duplicates_dropped": graph.duplicates_dropped,
               "self_loops_dropped": graph.self_loops_dropped,
               "iterations": eq.iterations, "max_residual": eq.max_residual,
               "single_price": single, "spearman": report.spearman,
               "spearman_constant": report.constant}
    _emit(scenario, "network", NETWORK_HEADER, report.rows, {"summary": summary})
    _emit(scenario, "network_summary", METRIC_HEADER, _metrics_rows(summary))
    return EXIT_OK


def cmd_hetero(scenario: ScenarioConfig) -> int:
    block = scenario.block("types")
    try:
        types = TypeProfile(tuple(block.get("alphas", ())), tuple(block.get("gammas", ())))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"types: {exc}") from None
    weighting = block.get("weighting", "harmonic")
    if weighting not in ("harmonic", "posterior"):
        raise ConfigError("types.weighting: expected harmonic or posterior")
    eq = solve_hetero_pbe(scenario.market, types, weighting)
    rows = [(k, a, g, v, eq.p0) for k, (a, g, v)
            in enumerate(zip(types.alphas, types.gammas, eq.v_stars))]
    _emit(scenario, "hetero", HETERO_HEADER, rows, {"equilibrium": eq.to_dict()})
    return EXIT_OK


def read_samples(path) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].replace(",", " ").split()
            try:
                values.extend(float(token) for token in line)
            except ValueError:
                raise InputError(f"{path}: line {number}: not a number") from None
    return np.asarray(values)


def cmd_fit(scenario: ScenarioConfig) -> int:
    block = scenario.block("fit")
    samples = read_samples(scenario.path("fit", "samples"))
    lo = _number(block, "lo", "fit")
    hi = _number(block, "hi", "fit")
    fit = dist_mod.fit_truncated_normal(samples, lo, hi)
    fitted = fit.distribution
    metrics = {"mu": fitted.mu, "sigma": fitted.sigma, "lo": fitted.lo, "hi": fitted.hi,
               "ks_statistic": fit.ks_statistic, "ks_critical_5pct": fit.ks_critical_5pct,
               "log_likelihood": fit.log_likelihood, "count": fit.count,
               "sigma_at_bound": fit.sigma_at_bound}
    _emit(scenario, "fit", METRIC_HEADER, _metrics_rows(metrics), {"metrics": metrics})
    return EXIT_OK


def cmd_check(scenario: ScenarioConfig) -> int:
    cfg = scenario.market
    report = dist_mod.check_assumption_a1(cfg.dist)
    rows = [("distribution", cfg.dist.to_dict()["kind"]),
            ("cdf_concave", report.cdf_concave),
            ("cdf_violation", report.cdf_violation),
            ("revenue_concave", report.revenue_concave),
            ("revenue_violation", report.revenue_violation),
            ("monopoly_price", report.monopoly_price),
            ("nontrivial", cfg.nontrivial),
            ("two_log_top_benefit", 2.0 * cfg.top_benefit),
            ("notes", report.notes)]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {_cell(value)}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "compare": cmd_compare, "network": cmd_network, "hetero": cmd_hetero,
            "fit": cmd_fit, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socialprofiling",
        description="Equilibrium solver and simulator for pricing with social-network profiling.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="scenario JSON file")
    parser.add_argument("--out", help="output path prefix (default: config path without .json)")
    parser.add_argument("--format", choices=FORMATS, help="output format (default csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.config, args.out, args.format)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoEquilibriumFound as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return EXIT_SOLVER
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ProfilingError, ValueError) as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def residual_of_json(path) -> float:
    """Re-solve check for an emitted three-stage JSON equilibrium file."""
    from .pbe import EquilibriumOutcome

    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = MarketConfig.from_dict(payload["market"])
    outcome = EquilibriumOutcome.from_dict(payload["equilibrium"])
    if not 0.0 < cfg.delta < 1.0:
        return 0.0 if math.isclose(outcome.p0_star, solve_equilibrium(cfg).p0_star) else math.inf
    return equilibrium_residual(cfg, outcome.v_star, outcome.p0_star)


if __name__ == "__main__":
    sys.exit(main())
