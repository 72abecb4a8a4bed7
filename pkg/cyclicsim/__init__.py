"""TSN cyclic shaper simulator and analytic delay bounds for CQF, 3-queue CQF and MCQF."""
from cyclicsim.analysis import check_feasibility, compute_bounds, validate_traces
from cyclicsim.engine import DelayParams, SimConfig, TraceSet, run
from cyclicsim.kpi import compare_shapers, compute_kpis, export
from cyclicsim.scenario import Scenario, load_scenario
from cyclicsim.shaper import ShaperConfig, ShaperKind, default_shaper_config
from cyclicsim.topology import NetworkGraph, load_topology
from cyclicsim.traffic import Flow, FlowSet, Qid

__version__ = "0.1.0"

__all__ = [
    "DelayParams",
    "Flow",
    "FlowSet",
    "NetworkGraph",
    "Qid",
    "Scenario",
    "ShaperConfig",
    "ShaperKind",
    "SimConfig",
    "TraceSet",
    "check_feasibility",
    "compare_shapers",
    "compute_bounds",
    "compute_kpis",
    "default_shaper_config",
    "export",
    "load_scenario",
    "load_topology",
    "run",
    "validate_traces",
]
