"""
Periodic time-triggered flows.

A flow emits one frame per period at offset phi from the period start, from
its source end station along a fixed route. The flow set's hypercycle is the
least common multiple of all periods. Offsets, group and queue selectors are
inputs from an external scheduler; apply_schedule ingests them.
"""
import logging
import math
import random
from enum import Enum
from functools import reduce
from typing import TYPE_CHECKING, Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from cyclicsim.errors import (
    EmptyFlowSet,
    HypercycleOverflow,
    InvalidParameter,
    OffsetConstraintViolation,
    UnknownFlowId,
    ValidationError,
)
from cyclicsim.topology import NetworkGraph, Route, shortest_path
from cyclicsim.units import NS_PER_US

if TYPE_CHECKING:
    from cyclicsim.shaper import ShaperConfig

logger = logging.getLogger(__name__)

TT_PRIORITY = 7
MIN_PAYLOAD_B = 55
MAX_PAYLOAD_B = 1500
MAX_HYPERCYCLE_US = (2 ** 63 - 1) // NS_PER_US
DEFAULT_PERIODS_US = (100, 200, 400)


class Qid(str, Enum):
    """Relative queue selector for 3-queue groups."""
    NORMAL = "normal"
    TOLERATING = "tolerating"


class Flow(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int
    src: int
    dst: int
    period_us: int = Field(gt=0)
    deadline_us: float = Field(gt=0)
    size_b: int = Field(gt=0)
    route: Route
    phi_us: float = 0.0
    priority: Literal[7] = TT_PRIORITY
    gid: Optional[int] = Field(default=None, ge=1)
    qid: Optional[Qid] = None

    @model_validator(mode="after")
    def _check_endpoints(self) -> "Flow":
        if self.src == self.dst:
            raise ValueError(f"flow {self.id}: src and dst must differ")
        if self.route.src != self.src or self.route.dst != self.dst:
            raise ValueError(f"flow {self.id}: route {list(self.route.path)} does not join {self.src} to {self.dst}")
        return self

    @property
    def sw_num(self) -> int:
        return self.route.sw_count


def hypercycle(periods: Iterable[int]) -> int:
    """
    Least common multiple of the flow periods, in microseconds.

    Raises:
        EmptyFlowSet: No periods given
        InvalidParameter: A period is non-positive or not integral
        HypercycleOverflow: The LCM exceeds the representable range
    """
    values = list(periods)
    if not values:
        raise EmptyFlowSet("hypercycle of an empty flow set is undefined")
    for period in values:
        if period <= 0 or int(period) != period:
            raise InvalidParameter(f"periods must be positive integral microseconds, got {period}")

    result = reduce(math.lcm, (int(p) for p in values))
    if result > MAX_HYPERCYCLE_US:
        raise HypercycleOverflow(f"hypercycle {result} us exceeds {MAX_HYPERCYCLE_US} us")
    return result


class FlowSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    flows: Tuple[Flow, ...] = ()

    @model_validator(mode="after")
    def _unique_ids(self) -> "FlowSet":
        ids = [f.id for f in self.flows]
        if len(ids) != len(set(ids)):
            raise ValueError("flow ids must be unique")
        return self

    @property
    def hypercycle_us(self) -> int:
        return hypercycle(f.period_us for f in self.flows)

    def by_id(self) -> Dict[int, Flow]:
        return {f.id: f for f in self.flows}

    def __len__(self) -> int:
        return len(self.flows)

    def __iter__(self):
        return iter(self.flows)


class OffsetViolation(BaseModel):
    flow_id: int
    phi_us: float
    period_us: int


class OffsetReport(BaseModel):
    violations: List[OffsetViolation] = []

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_offsets(flows: Iterable[Flow]) -> OffsetReport:
    """List every flow whose offset falls outside [0, period]."""
    violations = [
        OffsetViolation(flow_id=f.id, phi_us=f.phi_us, period_us=f.period_us)
        for f in flows
        if not 0 <= f.phi_us <= f.period_us
    ]
    return OffsetReport(violations=violations)


def _weighted(rng: random.Random, weights: Mapping, what: str):
    choices = sorted(weights, key=str)
    values = [weights[c] for c in choices]
    if not choices or any(w < 0 for w in values) or sum(values) <= 0:
        raise InvalidParameter(f"{what} weights must be non-negative with a positive sum")
    return rng.choices(choices, weights=values)[0]


def generate_flows(graph: NetworkGraph,
                   n_flows: int,
                   period_choices: Sequence[int] = DEFAULT_PERIODS_US,
                   payload_range: Tuple[int, int] = (MIN_PAYLOAD_B, MAX_PAYLOAD_B),
                   gid_weights: Optional[Mapping[int, float]] = None,
                   qid_weights: Optional[Mapping[Qid, float]] = None,
                   seed: int = 0) -> FlowSet:
    """
    Draw a synthetic TT flow set.

    Args:
        graph: Topology providing end stations and routes
        n_flows: Number of flows to draw
        period_choices: Periods (us) drawn uniformly
        payload_range: Inclusive payload bounds (bytes), within [55, 1500]
        gid_weights: Relative weights per group id (default: group 1 only)
        qid_weights: Relative weights per queue selector (default: Normal only)
        seed: Random seed

    Returns:
        FlowSet with ids 1..n_flows, phi = 0, deadline = period, priority 7
    """
    end_stations = graph.end_stations()
    if len(end_stations) < 2:
        raise InvalidParameter("graph needs at least two end stations")
    if n_flows < 0:
        raise InvalidParameter(f"n_flows must be >= 0, got {n_flows}")
    if not period_choices:
        raise InvalidParameter("period_choices must not be empty")
    lo, hi = payload_range
    if not MIN_PAYLOAD_B <= lo <= hi <= MAX_PAYLOAD_B:
        raise InvalidParameter(f"payload_range must lie within [{MIN_PAYLOAD_B}, {MAX_PAYLOAD_B}], got {payload_range}")
    gid_weights = gid_weights or {1: 1.0}
    qid_weights = qid_weights or {Qid.NORMAL: 1.0}

    rng = random.Random(seed)
    flows = []
    for flow_id in range(1, n_flows + 1):
        src, dst = rng.sample(end_stations, 2)
        period = rng.choice(list(period_choices))
        size = rng.randint(lo, hi)
        gid = _weighted(rng, gid_weights, "gid")
        qid = Qid(_weighted(rng, qid_weights, "qid"))
        flows.append(Flow(
            id=flow_id, src=src, dst=dst, period_us=period, deadline_us=float(period),
            size_b=size, route=shortest_path(graph, src, dst), phi_us=0.0, gid=gid, qid=qid,
        ))

    flowset = FlowSet(flows=tuple(flows))
    logger.info(f"Generated {n_flows} flows (seed={seed})")
    return flowset


class ScheduleEntry(BaseModel):
    """Per-flow scheduler output: offset, group and queue selector."""
    model_config = ConfigDict(extra="forbid")

    id: int
    phi_us: Optional[float] = None
    gid: Optional[int] = Field(default=None, ge=1)
    qid: Optional[Qid] = None


def apply_schedule(flowset: FlowSet, entries: Iterable[ScheduleEntry]) -> FlowSet:
    """
    Overwrite phi/gid/qid of the referenced flows.

    Raises:
        UnknownFlowId: An entry references a flow not in the set
        OffsetConstraintViolation: A resulting offset violates 0 <= phi <= period
    """
    by_id = flowset.by_id()
    for entry in entries:
        if entry.id not in by_id:
            raise UnknownFlowId(f"schedule entry references unknown flow {entry.id}")
        updates = entry.model_dump(exclude={"id"}, exclude_none=True)
        by_id[entry.id] = by_id[entry.id].model_copy(update=updates)

    result = FlowSet(flows=tuple(by_id[f.id] for f in flowset.flows))
    report = validate_offsets(result.flows)
    if not report.ok:
        bad = ", ".join(f"flow {v.flow_id} (phi={v.phi_us}, period={v.period_us})" for v in report.violations)
        raise OffsetConstraintViolation(f"offset outside [0, period]: {bad}")
    return result


def with_shaper_defaults(flowset: FlowSet, shaper_config: "ShaperConfig") -> FlowSet:
    """Fill missing gid (first configured group) and qid (Normal)."""
    default_gid = shaper_config.groups[0].gid
    flows = []
    for flow in flowset.flows:
        updates = {}
        if flow.gid is None:
            updates["gid"] = default_gid
        if flow.qid is None:
            updates["qid"] = Qid.NORMAL
        flows.append(flow.model_copy(update=updates) if updates else flow)
    return FlowSet(flows=tuple(flows))


def check_routes(graph: NetworkGraph, flowset: FlowSet) -> None:
    """Raise ValidationError unless every flow's route exists in the graph."""
    for flow in flowset.flows:
        for node_id in flow.route.path:
            if not graph.has_node(node_id):
                raise ValidationError(f"flow {flow.id}: route node {node_id} not in graph")
        for a, b in flow.route.hops():
            if not graph.has_link(a, b):
                raise ValidationError(f"flow {flow.id}: route uses missing link {a}-{b}")
