"""
Command-line entry point.

    cyclicsim generate ring --switches 4 --es-per-switch 1
    cyclicsim analyze scenario.yaml
    cyclicsim simulate scenario.yaml --shaper mcqf --slots 25,50,100
    cyclicsim compare scenario.yaml --shapers cqf,3q,mcqf --workers 3
    cyclicsim validate scenario.yaml

Exit codes: 0 success, 1 domain failure (violations, bound breaks, drops),
2 usage or parse errors.
"""
import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from cyclicsim.analysis import ValidationReport, check_feasibility, compute_bounds, validate_traces
from cyclicsim.config import configure_logging, load_settings
from cyclicsim.documents import write_document
from cyclicsim.engine import TraceSet, run
from cyclicsim.errors import CyclicSimError, ParseError
from cyclicsim.kpi import FORMATS, FlowKpi, annotate, compare_shapers, compute_kpis, export
from cyclicsim.scenario import GeneratorSpec, Scenario, ScenarioOverrides, load_scenario
from cyclicsim.shaper import ShaperKind
from cyclicsim.topology import bundled_topology_path, load_topology, save_topology
from cyclicsim.traffic import Qid, generate_flows

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

TOPOLOGY_KINDS = ("one_switch", "ring", "erg", "rrg", "bag")
DEFAULT_FLOW_TOPOLOGY = "one_switch"


def _banner(title: str, lines: Sequence[str] = ()) -> None:
    print("\n" + "=" * 60)
    print(f"  {title}")
    print("=" * 60)
    for line in lines:
        print(f"  {line}")
    if lines:
        print("=" * 60)


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _shaper_list(text: str) -> List[ShaperKind]:
    try:
        return [ShaperKind(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"shapers must be among cqf, 3q, mcqf, got {text!r}")


def _weights(text: str) -> Dict[str, float]:
    """Parse 'key:weight,key:weight'."""
    result = {}
    for item in text.split(","):
        key, _, weight = item.partition(":")
        try:
            result[key.strip()] = float(weight) if weight else 1.0
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad weight in {text!r}")
    return result


def _out_root(args: argparse.Namespace, scenario: Optional[Scenario] = None) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    if scenario is not None and scenario.out_dir:
        return Path(scenario.out_dir)
    return Path(args.settings.out_dir)


def _fmt(args: argparse.Namespace, scenario: Optional[Scenario] = None) -> str:
    if args.format:
        return args.format
    if scenario is not None and scenario.fmt:
        return scenario.fmt
    return "csv"


def _overrides(args: argparse.Namespace) -> ScenarioOverrides:
    return ScenarioOverrides(
        seed=args.seed,
        shaper=getattr(args, "shaper", None),
        slots_us=getattr(args, "slots", None),
        hypercycles=getattr(args, "hypercycles", None),
        warmup_hypercycles=getattr(args, "warmup", None),
        sync_error_bound_us=getattr(args, "sync_error", None),
    )


# --- generate

def cmd_generate(args: argparse.Namespace) -> int:
    """Write a synthetic topology file or a flow list for an existing topology."""
    seed = args.seed if args.seed is not None else 0
    out_root = _out_root(args)

    if args.kind == "flows":
        path = Path(args.topology)
        graph = load_topology(path if path.is_file() else bundled_topology_path(args.topology))
        gid_weights = {int(k): w for k, w in args.gid_weights.items()} if args.gid_weights else None
        qid_weights = {Qid(k): w for k, w in args.qid_weights.items()} if args.qid_weights else None
        flows = generate_flows(graph, args.count, args.periods, (args.min_payload, args.max_payload),
                               gid_weights, qid_weights, seed=seed)
        entries = []
        for flow in flows:
            entry = flow.model_dump(mode="json", exclude={"route", "priority"}, exclude_none=True)
            entry["route"] = list(flow.route.path)
            entries.append(entry)
        out = Path(args.out) if args.out else out_root / f"flows_{seed}.yaml"
        write_document({"flows": entries}, out, header=f"cyclicsim generate flows --count {args.count} --seed {seed}")
        _banner("Flows generated", [f"Flows: {len(flows)}", f"Hypercycle: {flows.hypercycle_us if len(flows) else 0} us",
                                    f"Output: {out}"])
        return EXIT_OK

    spec = GeneratorSpec(
        kind=args.kind, switches=args.switches, end_stations=args.end_stations,
        es_per_switch=args.es_per_switch, p=args.p, degree=args.degree, m=args.m, seed=seed,
    )
    graph = spec.build(seed)
    out = Path(args.out) if args.out else out_root / f"{args.kind}.topo"
    save_topology(graph, out, header=f"cyclicsim generate {args.kind} (seed {seed})")
    _banner("Topology generated", [
        f"Kind: {args.kind}",
        f"Nodes: {len(graph.nodes)} ({len(graph.switches())} switches, {len(graph.end_stations())} end stations)",
        f"Links: {len(graph.links)}",
        f"Output: {out}",
    ])
    return EXIT_OK


# --- analyze / validate

def cmd_analyze(args: argparse.Namespace) -> int:
    """Closed-form bounds and static feasibility of a scenario."""
    scenario = load_scenario(args.scenario, _overrides(args))
    fmt = _fmt(args, scenario)
    out_dir = _out_root(args, scenario) / scenario.name

    bounds = compute_bounds(scenario.flows, scenario.shaper, scenario.delays)
    report = check_feasibility(scenario.graph, scenario.flows, scenario.shaper, scenario.delays,
                               scenario.sim.frame_overhead_b)
    export(bounds, out_dir / f"bounds.{fmt}", fmt)
    export(report, out_dir / f"feasibility.{fmt}", fmt)

    _banner(f"Analysis: {scenario.name} ({scenario.shaper.kind.value})", [
        f"Flows: {len(scenario.flows)}",
        f"Worst WCD: {max((b.wcd_us for b in bounds), default=0):.3f} us",
        f"Feasibility: {report.verdict}",
        f"Queue violations: {len(report.queue_violations)}",
        f"Bandwidth violations: {len(report.bandwidth_violations)}",
        f"Alignment violations: {len(report.alignment_violations)}",
        f"Output: {out_dir}",
    ])
    return EXIT_OK if report.ok else EXIT_FAILURE


def cmd_validate(args: argparse.Namespace) -> int:
    """Parse and statically check a scenario; report the feasibility verdict."""
    scenario = load_scenario(args.scenario, _overrides(args))
    report = check_feasibility(scenario.graph, scenario.flows, scenario.shaper, scenario.delays,
                               scenario.sim.frame_overhead_b)
    _banner(f"Validation: {scenario.name}", [
        f"Nodes: {len(scenario.graph.nodes)}, links: {len(scenario.graph.links)}, flows: {len(scenario.flows)}",
        f"Hypercycle: {scenario.flows.hypercycle_us if len(scenario.flows) else 0} us",
        f"Shaper: {scenario.shaper.kind.value} "
        f"({', '.join(f'G{g.gid}={g.slot_us:g}us/{g.queues}q' for g in scenario.shaper.groups)})",
        f"Feasibility: {report.verdict}",
    ])
    return EXIT_OK if report.ok else EXIT_FAILURE


# --- simulate / compare

def _simulate(scenario: Scenario) -> Tuple[TraceSet, List[FlowKpi], ValidationReport]:
    """Run, measure and check one scenario."""
    flows = scenario.flows
    traces = run(scenario.graph, flows, scenario.shaper, scenario.delays, scenario.sim)
    bounds = compute_bounds(flows, scenario.shaper, scenario.delays)
    validation = validate_traces(traces, bounds)
    kpis = annotate(compute_kpis(traces, flows), bounds, validation)
    return traces, kpis, validation


def _simulate_kpis(scenario: Scenario) -> List[FlowKpi]:
    return _simulate(scenario)[1]


def cmd_simulate(args: argparse.Namespace) -> int:
    """Run the engine, compute KPIs and check them against the analytic bounds."""
    scenario = load_scenario(args.scenario, _overrides(args))
    fmt = _fmt(args, scenario)
    out_dir = _out_root(args, scenario) / scenario.name

    flows = scenario.flows
    traces, kpis, validation = _simulate(scenario)

    label = scenario.shaper.kind.value
    export(kpis, out_dir / f"kpis_{label}.{fmt}", fmt)
    export(validation, out_dir / f"validation_{label}.{fmt}", fmt)
    if args.trace:
        trace_path = out_dir / f"trace_{label}.json"
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        trace_path.write_text(traces.dumps() + "\n", encoding="utf-8")

    failed = [v.flow_id for v in validation.flows if not v.passed]
    _banner(f"Simulation: {scenario.name} ({label})", [
        f"Flows: {len(flows)}, hypercycles: {scenario.sim.hypercycles} (warmup {scenario.sim.warmup_hypercycles})",
        f"Frames: {traces.total_emitted} emitted, {traces.total_delivered} delivered, {len(traces.drops)} dropped",
        f"Slot overruns: {len(traces.overruns)}",
        f"Worst SMD: {max((k.smd_us for k in kpis if k.smd_us is not None), default=0):.3f} us",
        f"Bound check: {'pass' if validation.ok else f'FAIL for flows {failed}'}",
        f"Output: {out_dir}",
    ])
    return EXIT_OK if validation.ok and not traces.drops else EXIT_FAILURE


def cmd_compare(args: argparse.Namespace) -> int:
    """Run the same scenario under several shapers and tabulate SMD/SMJ side by side."""
    base = load_scenario(args.scenario, _overrides(args))
    fmt = _fmt(args, base)
    out_dir = _out_root(args, base) / base.name
    shapers = args.shapers or [ShaperKind.CQF, ShaperKind.THREE_QUEUE, ShaperKind.MCQF]
    scenarios = [base.with_shaper(kind) for kind in shapers]
    workers = args.workers or args.settings.workers

    if workers > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(scenarios))) as pool:
            results = list(pool.map(_simulate_kpis, scenarios))
    else:
        results = [_simulate_kpis(s) for s in scenarios]

    table = compare_shapers([(kind.value, kpis) for kind, kpis in zip(shapers, results)])
    export(table, out_dir / f"comparison.{fmt}", fmt)

    lines = []
    for group in table.groups:
        worst = ", ".join(f"{label}={group.smd_us[label]:.3f}" if group.smd_us[label] is not None else f"{label}=-"
                          for label in table.labels)
        lines.append(f"G{group.gid}: {group.flows} flows, worst SMD us: {worst}")
    lines.append(f"Output: {out_dir / f'comparison.{fmt}'}")
    _banner(f"Comparison: {base.name}", lines)
    return EXIT_OK


# --- argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (overrides the scenario)")
    common.add_argument("--out-dir", default=None, help="Output root (default: $CYCLICSIM_OUT_DIR or results)")
    common.add_argument("--format", choices=FORMATS, default=None, help="Result file format")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(prog="cyclicsim", description="TSN cyclic shaper simulator and delay bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="Generate a topology or a flow set")
    gen.add_argument("kind", choices=TOPOLOGY_KINDS + ("flows",))
    gen.add_argument("--switches", type=int, default=1)
    gen.add_argument("--es-per-switch", type=int, default=1)
    gen.add_argument("--end-stations", type=int, default=None, help="End stations of a one_switch topology")
    gen.add_argument("--p", type=float, default=None, help="ERG link probability")
    gen.add_argument("--degree", type=int, default=None, help="RRG degree")
    gen.add_argument("--m", type=int, default=None, help="BAG attachments per new switch")
    gen.add_argument("--topology", default=DEFAULT_FLOW_TOPOLOGY,
                     help=f"Topology file or bundled name for flows (default: {DEFAULT_FLOW_TOPOLOGY})")
    gen.add_argument("--count", type=int, default=20, help="Number of flows")
    gen.add_argument("--periods", type=_int_list, default=[100, 200, 400], help="Periods in us, e.g. 100,200,400")
    gen.add_argument("--min-payload", type=int, default=55)
    gen.add_argument("--max-payload", type=int, default=1500)
    gen.add_argument("--gid-weights", type=_weights, default=None, help="e.g. 1:1,2:1,3:1")
    gen.add_argument("--qid-weights", type=_weights, default=None, help="e.g. normal:3,tolerating:1")
    gen.add_argument("--out", default=None, help="Output file")
    gen.set_defaults(handler=cmd_generate)

    ana = sub.add_parser("analyze", parents=[common], help="Delay bounds and feasibility")
    ana.add_argument("scenario")
    ana.set_defaults(handler=cmd_analyze)

    sim = sub.add_parser("simulate", parents=[common], help="Run the simulator and check bounds")
    sim.add_argument("scenario")
    sim.add_argument("--shaper", choices=[k.value for k in ShaperKind], default=None)
    sim.add_argument("--slots", type=_float_list, default=None, help="Slot lengths in us, e.g. 25,50,100")
    sim.add_argument("--hypercycles", type=int, default=None)
    sim.add_argument("--warmup", type=int, default=None, help="Warmup hypercycles excluded from KPIs")
    sim.add_argument("--sync-error", type=float, default=None, help="Clock sync error bound in us")
    sim.add_argument("--trace", action="store_true", help="Also write the full trace as JSON")
    sim.set_defaults(handler=cmd_simulate)

    cmp_ = sub.add_parser("compare", parents=[common], help="Compare shapers on one scenario")
    cmp_.add_argument("scenario")
    cmp_.add_argument("--shapers", type=_shaper_list, default=None, help="e.g. cqf,3q,mcqf")
    cmp_.add_argument("--workers", type=int, default=None, help="Parallel runs (default: $CYCLICSIM_WORKERS)")
    cmp_.add_argument("--hypercycles", type=int, default=None)
    cmp_.set_defaults(handler=cmd_compare)

    val = sub.add_parser("validate", parents=[common], help="Statically validate a scenario")
    val.add_argument("scenario")
    val.set_defaults(handler=cmd_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the cyclicsim command."""
    settings = load_settings()
    parser = build_parser()
    args = parser.parse_args(argv)
    args.settings = settings
    configure_logging(args.log_level or settings.log_level)

    try:
        return args.handler(args)
    except ParseError as e:
        logger.error(f"Parse error: {e}")
        return EXIT_USAGE
    except CyclicSimError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
