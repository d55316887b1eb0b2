"""
Command-line entry point.

    python -m pvsa <command> [options]

On success a one-line ``key=value`` summary goes to stdout and, with --out,
a CSV table plus a run manifest are written. On failure exactly one line
``error:<category>:<ErrorClass>:<message>`` is printed and the exit code
identifies the category.
"""

import argparse
import logging
import math
import sys
import time
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from pvsa import __version__
from pvsa.config import settings
from pvsa.exceptions import DegenerateDistribution, PvsaError, UsageError
from pvsa.logging_config import configure_logging
from pvsa.models.loadflow import SolveSettings
from pvsa.models.manifest import RunManifest
from pvsa.models.network import FeederGraph, LoadSpec
from pvsa.models.phase import PHASES, Phase
from pvsa.models.scenario import DeterministicScenario, Scenario, StochasticScenario
from pvsa.services.bench_service import BENCH_CASES, BENCH_COLUMNS, BenchService
from pvsa.services.covariance_service import build_covariance
from pvsa.services.feeder_service import FeederService
from pvsa.services.loadflow_service import LoadFlowService
from pvsa.services.montecarlo_service import MonteCarloService, histogram, js_distance
from pvsa.services.pvsa_service import PvsaService, discretize
from pvsa.services.results_writer import manifest_path, write_manifest, write_results
from pvsa.services.vsa_service import VsaService

logger = logging.getLogger(__name__)

SOLVE_COLUMNS = ("bus", "label", "phase", "v_re", "v_im", "v_mag_pu", "v_angle_deg")
VSA_COLUMNS = (
    "bus", "label", "phase",
    "analytic_re", "analytic_im", "oracle_re", "oracle_im",
    "analytic_pu", "oracle_pu", "abs_error_pu",
)
BOUND_COLUMNS = (
    "bus", "label", "phase",
    "bound_real_pu", "bound_imag_pu", "bound_mag_pu", "actual_error_pu", "dominates",
)
HISTOGRAM_COLUMNS = ("bin_lo", "bin_hi", "empirical_density", "theoretical_density")
NETWORK_JS_COLUMNS = ("bus", "label", "phase", "js_distance")
VIOLATION_COLUMNS = ("observation", "phase", "threshold_pu", "probability", "mc_frequency", "samples")


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message: str) -> None:
        raise UsageError(message)


# --- shared plumbing --------------------------------------------------------


class Context:
    """Inputs resolved once per command."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.feeders = FeederService()
        self.manifest = RunManifest(command=args.command_name, version=__version__)
        self._graph: Optional[FeederGraph] = None
        self._loads: Optional[LoadSpec] = None
        self._scenario: Optional[Scenario] = None

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        started = time.perf_counter()
        try:
            yield
        finally:
            self.manifest.record(name, time.perf_counter() - started)

    @property
    def graph(self) -> FeederGraph:
        if self._graph is None:
            if not getattr(self.args, "feeder", None):
                raise UsageError("--feeder is required")
            with self.stage("parse"):
                self._graph, self._loads = self.feeders.load_feeder(self.args.feeder)
            self.manifest.inputs.append(self.args.feeder)
        return self._graph

    @property
    def loads(self) -> LoadSpec:
        self.graph
        return self._loads

    @property
    def scenario(self) -> Scenario:
        if self._scenario is None:
            if not getattr(self.args, "scenario", None):
                raise UsageError("--scenario is required")
            graph = self.graph
            with self.stage("parse"):
                self._scenario = self.feeders.load_scenario(self.args.scenario, graph)
            self.manifest.inputs.append(self.args.scenario)
        return self._scenario

    def deterministic(self) -> DeterministicScenario:
        if not isinstance(self.scenario, DeterministicScenario):
            raise UsageError(f"scenario {self.scenario.name} is not deterministic")
        return self.scenario

    def stochastic(self) -> StochasticScenario:
        if not isinstance(self.scenario, StochasticScenario):
            raise UsageError(f"scenario {self.scenario.name} is not stochastic")
        return self.scenario

    def observation(self, allow_all: bool = False) -> Optional[str]:
        bus = getattr(self.args, "observation", None)
        if bus is None and self._scenario is not None and self._scenario.observation is not None:
            bus = self._scenario.observation.bus
        if bus is None:
            raise UsageError("--observation is required (scenario names none)")
        if bus == "all":
            if not allow_all:
                raise UsageError("--observation all is not supported by this command")
            return None
        self.graph.bus_index(bus)
        return bus

    def phase(self) -> Phase:
        value = getattr(self.args, "phase", None)
        if value is None and self._scenario is not None and self._scenario.observation is not None:
            return self._scenario.observation.phase
        return Phase.parse(value or "a")

    def threshold(self) -> float:
        value = getattr(self.args, "threshold", None)
        if value is None and self._scenario is not None:
            value = self._scenario.threshold_pu
        return settings.default_threshold_pu if value is None else value

    def solver(self) -> LoadFlowService:
        return LoadFlowService(
            SolveSettings.from_settings(
                tolerance=getattr(self.args, "tolerance", None),
                max_iterations=getattr(self.args, "max_iterations", None),
            )
        )

    def finish(self, rows: Sequence[dict], columns: Sequence[str], summary: Dict[str, object]) -> int:
        out = getattr(self.args, "out", None)
        if out:
            self.manifest.parameters.update(
                {k: v for k, v in sorted(vars(self.args).items()) if k not in ("handler", "log_level")}
            )
            write_results(rows, out, columns)
            self.manifest.outputs.append(str(out))
            write_manifest(self.manifest, manifest_path(out))
        print(" ".join(f"{key}={_render(value)}" for key, value in summary.items()))
        return 0


def _render(value: object) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _present(graph: FeederGraph) -> Iterator[tuple]:
    """(row index, bus, phase) for every present phase, in graph order."""
    for i, bus in enumerate(graph.buses):
        for phase in PHASES:
            if graph.phase_mask[i, phase.index]:
                yield i, bus, phase


# --- commands ---------------------------------------------------------------


def cmd_validate(ctx: Context) -> int:
    graph, loads = ctx.graph, ctx.loads
    summary: Dict[str, object] = {
        "status": "ok",
        "feeder": graph.name,
        "buses": graph.n_buses,
        "segments": len(graph.segments),
        "loaded_buses": len(loads.powers),
    }
    if getattr(ctx.args, "scenario", None):
        summary["scenario"] = ctx.scenario.name
    return ctx.finish([], (), summary)


def cmd_solve(ctx: Context) -> int:
    graph = ctx.graph
    with ctx.stage("solve"):
        state = ctx.solver().solve(graph, ctx.loads)
    rows = []
    for i, bus, phase in _present(graph):
        v = state.voltages[i, phase.index]
        rows.append({
            "bus": bus,
            "label": graph.label(bus),
            "phase": phase.value,
            "v_re": v.real,
            "v_im": v.imag,
            "v_mag_pu": abs(v) / graph.v_base,
            "v_angle_deg": math.degrees(np.angle(v)),
        })
    magnitude = state.magnitude_pu
    return ctx.finish(rows, SOLVE_COLUMNS, {
        "iterations": state.iterations,
        "mismatch_pu": state.mismatch,
        "min_v_pu": float(np.nanmin(magnitude)),
        "max_v_pu": float(np.nanmax(magnitude)),
    })


def cmd_vsa_run(ctx: Context) -> int:
    graph, loads, scenario = ctx.graph, ctx.loads, ctx.deterministic()
    solver = ctx.solver()
    with ctx.stage("solve"):
        base = solver.solve(graph, loads)
    with ctx.stage("analytic"):
        analytic = VsaService(graph, base).delta_v_profile(scenario)
    with ctx.stage("oracle"):
        oracle = solver.delta_v_array(graph, loads, scenario, base)

    rows, errors = [], []
    for i, bus, phase in _present(graph):
        a, o = analytic[i, phase.index], oracle[i, phase.index]
        error = abs(a - o) / graph.v_base
        errors.append(error)
        rows.append({
            "bus": bus,
            "label": graph.label(bus),
            "phase": phase.value,
            "analytic_re": a.real,
            "analytic_im": a.imag,
            "oracle_re": o.real,
            "oracle_im": o.imag,
            "analytic_pu": abs(a) / graph.v_base,
            "oracle_pu": abs(o) / graph.v_base,
            "abs_error_pu": error,
        })
    return ctx.finish(rows, VSA_COLUMNS, {
        "scenario": scenario.name,
        "rows": len(rows),
        "max_abs_error_pu": max(errors),
        "mean_abs_error_pu": float(np.mean(errors)),
    })


def cmd_vsa_bound(ctx: Context) -> int:
    graph, loads, scenario = ctx.graph, ctx.loads, ctx.deterministic()
    observation = ctx.observation(allow_all=True) if getattr(ctx.args, "observation", None) else None
    solver = ctx.solver()
    with ctx.stage("solve"):
        base = solver.solve(graph, loads)
    vsa = VsaService(graph, base)
    with ctx.stage("analytic"):
        analytic = vsa.delta_v_profile(scenario)
    with ctx.stage("oracle"):
        oracle = solver.delta_v_array(graph, loads, scenario, base)

    buses = [observation] if observation else list(graph.buses)
    rows, margins = [], []
    with ctx.stage("bound"):
        for bus in buses:
            i = graph.bus_index(bus)
            terms = vsa.error_bound_multi(scenario, bus)
            for phase in sorted(graph.phases_of(bus), key=lambda p: p.index):
                actual = abs(analytic[i, phase.index] - oracle[i, phase.index]) / graph.v_base
                bound = terms.bound_mag_pu[phase.index]
                margins.append(bound - actual)
                rows.append({
                    "bus": bus,
                    "label": graph.label(bus),
                    "phase": phase.value,
                    "bound_real_pu": terms.bound_real[phase.index] / graph.v_base,
                    "bound_imag_pu": terms.bound_imag[phase.index] / graph.v_base,
                    "bound_mag_pu": bound,
                    "actual_error_pu": actual,
                    "dominates": bool(bound >= actual),
                })
    return ctx.finish(rows, BOUND_COLUMNS, {
        "scenario": scenario.name,
        "rows": len(rows),
        "bound_dominates": bool(min(margins) >= 0),
        "min_margin_pu": min(margins),
    })


def _fit(ctx: Context):
    graph, loads, scenario = ctx.graph, ctx.loads, ctx.stochastic()
    with ctx.stage("solve"):
        base = ctx.solver().solve(graph, loads)
    with ctx.stage("covariance"):
        covariance = build_covariance(graph, scenario)
    return base, covariance


def cmd_pvsa_dist(ctx: Context) -> int:
    base, covariance = _fit(ctx)
    graph = ctx.graph
    observation, phase, threshold = ctx.observation(), ctx.phase(), ctx.threshold()
    with ctx.stage("fit"):
        fit = PvsaService(graph, base).fit(covariance, observation, phase)
        probability = fit.violation_probability(threshold)

    nakagami = fit.nakagami_pu
    spread = math.sqrt(max(nakagami.omega - nakagami.mean**2, 0.0))
    upper = (nakagami.mean + 6.0 * spread) * settings.histogram_headroom
    edges = np.linspace(0.0, upper, settings.histogram_bins + 1)
    theory = discretize(fit.nakagami, edges, graph.v_base)
    rows = [
        {"bin_lo": lo, "bin_hi": hi, "empirical_density": None, "theoretical_density": d}
        for lo, hi, d in zip(edges[:-1], edges[1:], theory.density)
    ]
    return ctx.finish(rows, HISTOGRAM_COLUMNS, {
        "observation": observation,
        "phase": phase.value,
        "m": nakagami.m,
        "omega_pu2": nakagami.omega,
        "sigma_r_pu": math.sqrt(fit.moments.var_r) / graph.v_base,
        "sigma_i_pu": math.sqrt(fit.moments.var_i) / graph.v_base,
        "threshold_pu": threshold,
        "violation_probability": probability,
    })


def cmd_pvsa_mc(ctx: Context) -> int:
    base, covariance = _fit(ctx)
    graph, args = ctx.graph, ctx.args
    observation, phase = ctx.observation(allow_all=True), ctx.phase()
    samples = args.samples or settings.default_samples
    seed = settings.default_seed if args.seed is None else args.seed
    mc = MonteCarloService(graph, ctx.loads, base, ctx.solver(), jobs=args.jobs or settings.default_jobs)
    pvsa = PvsaService(graph, base)

    if observation is None:
        if args.mode != "linear":
            raise UsageError("--observation all supports --mode linear only")
        with ctx.stage("montecarlo"):
            magnitudes = mc.network_magnitudes(covariance, phase, samples, seed)
        rows, distances = [], []
        with ctx.stage("fit"):
            for bus, values in magnitudes.items():
                try:
                    fit = pvsa.fit(covariance, bus, phase)
                except DegenerateDistribution:
                    continue
                hist = histogram(values)
                value = js_distance(hist, discretize(fit.nakagami, hist.edges, graph.v_base))
                distances.append(value)
                rows.append({"bus": bus, "label": graph.label(bus), "phase": phase.value, "js_distance": value})
        return ctx.finish(rows, NETWORK_JS_COLUMNS, {
            "phase": phase.value,
            "buses": len(rows),
            "samples": samples,
            "mean_js_distance": float(np.mean(distances)) if distances else float("nan"),
        })

    with ctx.stage("montecarlo"):
        hist = mc.mc_distribution(covariance, observation, phase, samples, seed, args.mode)
    with ctx.stage("fit"):
        fit = pvsa.fit(covariance, observation, phase)
        theory = discretize(fit.nakagami, hist.edges, graph.v_base)
        distance = js_distance(hist, theory)
    rows = [
        {"bin_lo": lo, "bin_hi": hi, "empirical_density": e, "theoretical_density": t}
        for lo, hi, e, t in zip(hist.edges[:-1], hist.edges[1:], hist.density, theory.density)
    ]
    return ctx.finish(rows, HISTOGRAM_COLUMNS, {
        "observation": observation,
        "phase": phase.value,
        "mode": args.mode,
        "samples": samples,
        "seed": seed,
        "js_distance": distance,
    })


def cmd_pvsa_violation(ctx: Context) -> int:
    base, covariance = _fit(ctx)
    graph, args = ctx.graph, ctx.args
    observation, phase, threshold = ctx.observation(), ctx.phase(), ctx.threshold()
    with ctx.stage("fit"):
        probability = PvsaService(graph, base).fit(covariance, observation, phase).violation_probability(threshold)

    frequency = None
    if args.samples:
        seed = settings.default_seed if args.seed is None else args.seed
        mc = MonteCarloService(graph, ctx.loads, base, ctx.solver(), jobs=args.jobs or settings.default_jobs)
        with ctx.stage("montecarlo"):
            samples = mc.delta_v_samples(covariance, observation, phase, args.samples, seed, "linear")
        frequency = float(np.mean(np.abs(samples) > threshold * graph.v_base))

    row = {
        "observation": observation,
        "phase": phase.value,
        "threshold_pu": threshold,
        "probability": probability,
        "mc_frequency": frequency,
        "samples": args.samples or 0,
    }
    summary = dict(row)
    if frequency is None:
        summary.pop("mc_frequency")
        summary.pop("samples")
    return ctx.finish([row], VIOLATION_COLUMNS, summary)


def cmd_bench(ctx: Context) -> int:
    args = ctx.args
    bench = BenchService(
        repetitions=args.repetitions,
        warmups=args.warmups,
        mc_samples=args.mc_samples,
        jobs=args.jobs or settings.default_jobs,
        feeder_service=ctx.feeders,
    )
    with ctx.stage("bench"):
        rows = bench.run(args.cases)
    ctx.manifest.inputs.extend(args.cases)
    times = {(row["case"], row["method"]): row["seconds"] for row in rows}
    summary: Dict[str, object] = {}
    for case in args.cases:
        summary[f"{case}_oracle_over_analytic"] = times[(case, "oracle_solve")] / times[(case, "analytic_query")]
    return ctx.finish(rows, BENCH_COLUMNS, summary)


# --- parser -----------------------------------------------------------------


def _common(parser: argparse.ArgumentParser, scenario: bool = True, observation: bool = False) -> None:
    parser.add_argument("--feeder", required=True, help="bundled feeder name or path")
    if scenario:
        parser.add_argument("--scenario", required=True, help="bundled scenario name or path")
    if observation:
        parser.add_argument("--observation", help="observation bus id (default: from scenario)")
        parser.add_argument("--phase", choices=[p.value for p in PHASES], help="observation phase")
    parser.add_argument("--out", help="CSV output path; a manifest is written next to it")
    parser.add_argument("--tolerance", type=float, help="solver tolerance, pu")
    parser.add_argument("--max-iterations", type=int, help="solver iteration limit")


def _sampling(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--samples", type=int, help="Monte-Carlo sample count")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--jobs", type=int, help="worker threads")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="pvsa", description="Voltage sensitivity analysis for radial feeders")
    parser.add_argument("--version", action="version", version=f"pvsa {__version__}")
    parser.add_argument("--log-level", default=None, help="override PVSA_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    def add(name: str, handler: Callable[[Context], int], subparsers=commands, **kwargs) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, **kwargs)
        sub.set_defaults(handler=handler)
        return sub

    validate = add("validate", cmd_validate, help="parse and validate a feeder (and scenario)")
    validate.add_argument("--feeder", required=True)
    validate.add_argument("--scenario")

    _common(add("solve", cmd_solve, help="solve the base-case load flow"), scenario=False)

    vsa = commands.add_parser("vsa", help="deterministic voltage sensitivity").add_subparsers(
        dest="vsa_command", required=True, parser_class=ArgumentParser
    )
    _common(add("run", cmd_vsa_run, vsa, help="analytic vs oracle voltage change"))
    bound = add("bound", cmd_vsa_bound, vsa, help="error bound vs actual error")
    _common(bound)
    bound.add_argument("--observation", help="bus id or 'all' (default: all)")

    pvsa = commands.add_parser("pvsa", help="probabilistic voltage sensitivity").add_subparsers(
        dest="pvsa_command", required=True, parser_class=ArgumentParser
    )
    dist = add("dist", cmd_pvsa_dist, pvsa, help="fit the Nakagami law of |dV|")
    _common(dist, observation=True)
    dist.add_argument("--threshold", type=float, help="violation threshold, pu")

    mc = add("mc", cmd_pvsa_mc, pvsa, help="Monte-Carlo histogram and JS distance")
    _common(mc, observation=True)
    _sampling(mc)
    mc.add_argument("--mode", choices=["linear", "oracle"], default="linear")

    violation = add("violation", cmd_pvsa_violation, pvsa, help="P(|dV| > threshold)")
    _common(violation, observation=True)
    _sampling(violation)
    violation.add_argument("--threshold", type=float, help="violation threshold, pu")

    bench = add("bench", cmd_bench, help="time analytic queries against the oracle")
    bench.add_argument("--cases", nargs="+", choices=sorted(BENCH_CASES), default=list(BENCH_CASES))
    bench.add_argument("--repetitions", type=int, help="timed repetitions (median reported)")
    bench.add_argument("--warmups", type=int, help="untimed warm-up runs")
    bench.add_argument("--mc-samples", type=int, help="samples for the oracle Monte-Carlo timing")
    bench.add_argument("--jobs", type=int, help="worker threads")
    bench.add_argument("--out", help="CSV output path")
    return parser


def _command_name(args: argparse.Namespace) -> str:
    parts: List[str] = [args.command]
    for key in ("vsa_command", "pvsa_command"):
        if getattr(args, key, None):
            parts.append(getattr(args, key))
    return " ".join(parts)


def _fail(error: PvsaError) -> int:
    message = " ".join(str(error).split()) or type(error).__name__
    print(f"error:{error.category}:{type(error).__name__}:{message}")
    return error.exit_code


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, dispatch, and return the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail(e)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level)
    args.command_name = _command_name(args)
    for name in ("samples", "jobs", "repetitions", "mc_samples", "max_iterations"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            return _fail(UsageError(f"--{name.replace('_', '-')} must be >= 1"))
    threshold = getattr(args, "threshold", None)
    if threshold is not None and threshold < 0:
        return _fail(UsageError("--threshold must be >= 0"))
    tolerance = getattr(args, "tolerance", None)
    if tolerance is not None and not tolerance > 0:
        return _fail(UsageError("--tolerance must be > 0"))

    try:
        return args.handler(Context(args))
    except PvsaError as e:
        logger.debug(f"{args.command_name} failed: {e}")
        return _fail(e)
    except Exception as e:
        logger.error(f"Unexpected failure in {args.command_name}: {e}", exc_info=True)
        message = " ".join(str(e).split()) or type(e).__name__
        print(f"error:{PvsaError.category}:{type(e).__name__}:{message}")
        return 1


def main() -> None:
    sys.exit(run())
