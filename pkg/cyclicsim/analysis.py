"""
Closed-form delay bounds and static feasibility checks.

Bounds are reported offset-exclusive: they bound delivery - emission, where
emission already includes the flow's offset. Pass include_offset=True to get
the "from period start" form that adds phi.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from cyclicsim.engine import DEFAULT_FRAME_OVERHEAD_B, DelayParams, TraceSet
from cyclicsim.errors import InvalidParameter, MissingFlow
from cyclicsim.shaper import CapacityMode, GroupConfig, ShaperConfig, ShaperKind
from cyclicsim.topology import NetworkGraph, Route
from cyclicsim.traffic import Flow, FlowSet, OffsetViolation, Qid, validate_offsets
from cyclicsim.units import Number, ns_to_us, tx_time_ns, us_to_ns

logger = logging.getLogger(__name__)

EPS_US = 1e-6


class DelayBounds(BaseModel):
    flow_id: int
    gid: Optional[int] = None
    sw_num: int
    slot_us: float
    wcd_us: float
    bcd_us: float
    d_queue_us: float
    xi_us: float
    include_offset: bool = False


def xi_worst_ns(route: Route, delay_params: DelayParams) -> int:
    prop = sum(us_to_ns(delay_params.propagation_us(a, b)) for a, b in route.hops())
    return (prop
            + route.sw_count * us_to_ns(delay_params.processing_us)
            + us_to_ns(delay_params.sync_error_bound_us))


def xi_worst(route: Route, delay_params: DelayParams) -> float:
    """
    Worst-case lumped network delay along a route, in microseconds.

    Sum of link propagation delays, one processing delay per switch, and the
    sync-error bound once.
    """
    return ns_to_us(xi_worst_ns(route, delay_params))


def _bounds(flow: Flow, slot_us: Number, d_queue_us: Number, delay_params: DelayParams,
            include_offset: bool, xi_us: Optional[Number]) -> DelayBounds:
    if slot_us <= 0:
        raise InvalidParameter(f"slot length must be positive, got {slot_us}")
    t_ns = us_to_ns(slot_us)
    d_ns = us_to_ns(d_queue_us)
    xi_ns = us_to_ns(xi_us) if xi_us is not None else xi_worst_ns(flow.route, delay_params)
    sw = flow.sw_num
    phi_ns = us_to_ns(flow.phi_us) if include_offset else 0

    wcd_ns = (sw + 1) * t_ns + sw * d_ns + xi_ns + phi_ns
    bcd_ns = (sw - 1) * t_ns + xi_ns + phi_ns
    return DelayBounds(
        flow_id=flow.id, gid=flow.gid, sw_num=sw, slot_us=slot_us,
        wcd_us=ns_to_us(wcd_ns), bcd_us=ns_to_us(bcd_ns), d_queue_us=ns_to_us(d_ns),
        xi_us=ns_to_us(xi_ns), include_offset=include_offset,
    )


def bounds_cqf(flow: Flow, slot_us: Number, delay_params: DelayParams,
               include_offset: bool = False, xi_us: Optional[Number] = None) -> DelayBounds:
    """
    CQF bounds: wcd = (SW+1)T + xi, bcd = (SW-1)T + xi, no extra queuing.

    Args:
        flow: Routed flow
        slot_us: Slot length T
        delay_params: Network delays feeding xi
        include_offset: Add phi to both bounds
        xi_us: Use this xi instead of evaluating it along the route

    Raises:
        InvalidParameter: T <= 0
    """
    return _bounds(flow, slot_us, 0, delay_params, include_offset, xi_us)


def bounds_3q(flow: Flow, slot_us: Number, delay_params: DelayParams,
              include_offset: bool = False, xi_us: Optional[Number] = None) -> DelayBounds:
    """3-queue CQF: every switch may hold a frame one extra slot (d_queue = T) whatever its qid."""
    return _bounds(flow, slot_us, slot_us, delay_params, include_offset, xi_us)


def bounds_mcqf(flow: Flow, groups: Union[ShaperConfig, Sequence[GroupConfig]], delay_params: DelayParams,
                include_offset: bool = False, xi_us: Optional[Number] = None) -> DelayBounds:
    """
    MCQF bounds use the slot length of the flow's group; 3-queue groups add
    one slot of queuing per switch.

    Raises:
        UnknownGroup: The flow's gid is not configured
    """
    if not isinstance(groups, ShaperConfig):
        groups = ShaperConfig(kind=ShaperKind.MCQF, groups=tuple(groups))
    group = groups.group(flow.gid)
    d_queue = group.slot_us if group.queues == 3 else 0
    return _bounds(flow, group.slot_us, d_queue, delay_params, include_offset, xi_us)


def compute_bounds(flowset: FlowSet, shaper_config: ShaperConfig, delay_params: DelayParams,
                   include_offset: bool = False) -> List[DelayBounds]:
    """Bounds for every flow under the configured shaper, in flow order."""
    result = []
    for flow in flowset.flows:
        if shaper_config.kind is ShaperKind.CQF:
            bounds = bounds_cqf(flow, shaper_config.groups[0].slot_us, delay_params, include_offset)
        elif shaper_config.kind is ShaperKind.THREE_QUEUE:
            bounds = bounds_3q(flow, shaper_config.groups[0].slot_us, delay_params, include_offset)
        else:
            bounds = bounds_mcqf(flow, shaper_config, delay_params, include_offset)
        result.append(bounds)
    return result


# --- feasibility

class QueueViolation(BaseModel):
    node: int
    peer: int
    gid: int
    slot: int
    occupancy: int
    q_len: int


class BandwidthViolation(BaseModel):
    node: int
    peer: int
    gid: int
    slot: int
    wire_bytes: int
    budget_bytes: int
    demand_ns: int
    slot_ns: int


class AlignmentViolation(BaseModel):
    """Frames leaving a switch in this slot reach the next switch after the slot closes."""
    node: int
    peer: int
    gid: int
    slot: int
    latest_arrival_ns: int
    slot_ns: int


class FeasibilityReport(BaseModel):
    offset_violations: List[OffsetViolation] = []
    queue_violations: List[QueueViolation] = []
    bandwidth_violations: List[BandwidthViolation] = []
    alignment_violations: List[AlignmentViolation] = []

    @property
    def ok(self) -> bool:
        return not (self.offset_violations or self.queue_violations
                    or self.bandwidth_violations or self.alignment_violations)

    @property
    def verdict(self) -> str:
        return "pass" if self.ok else "fail"


@dataclass
class _SlotLoad:
    cost: int = 0
    wire_bytes: int = 0
    tx_ns: int = 0
    max_tx_ns: int = 0
    flows: List[int] = field(default_factory=list)

    def add(self, cost: int, wire_bytes: int, tx_ns: int, flow_id: int) -> None:
        self.cost += cost
        self.wire_bytes += wire_bytes
        self.tx_ns += tx_ns
        self.max_tx_ns = max(self.max_tx_ns, tx_ns)
        self.flows.append(flow_id)


def _source_departures(graph: NetworkGraph, flowset: FlowSet, h_ns: int,
                       overhead_b: int) -> List[Tuple[Flow, int]]:
    """
    Serialize every frame instance of two hypercycles through its source FIFO.

    Returns (flow, tx end at the source) pairs in emission order.
    """
    by_source: Dict[int, List[Tuple[int, int, int, Flow]]] = defaultdict(list)
    for flow in flowset.flows:
        period_ns = us_to_ns(flow.period_us)
        for k in range(2 * h_ns // period_ns):
            emission = k * period_ns + us_to_ns(flow.phi_us)
            by_source[flow.src].append((emission, flow.id, k, flow))

    departures = []
    for src in sorted(by_source):
        busy = 0
        for emission, _, _, flow in sorted(by_source[src], key=lambda item: item[:3]):
            link = graph.link(src, flow.route.path[1])
            start = max(emission, busy)
            busy = start + tx_time_ns(flow.size_b + overhead_b, link.rate_bps)
            departures.append((flow, busy))
    return departures


def check_feasibility(graph: NetworkGraph, flows: FlowSet, shaper_config: ShaperConfig,
                      delay_params: Optional[DelayParams] = None,
                      frame_overhead_b: int = DEFAULT_FRAME_OVERHEAD_B) -> FeasibilityReport:
    """
    Slot-granular static check of queue capacity, slot bandwidth and slot alignment.

    Every frame instance is mapped to the slot in which each switch on its
    route transmits it: the first switch forwards in the slot after arrival
    (two slots after for Tolerating frames in 3-queue groups) and each later
    switch advances the same way. Clocks are taken as synchronized.

    Args:
        graph: Topology
        flows: Scheduled flow set
        shaper_config: Shaper at every switch egress port
        delay_params: Network delays (default: from the graph)
        frame_overhead_b: Per-frame overhead added to the payload on the wire

    Returns:
        FeasibilityReport listing every violation; verdict pass iff none
    """
    delay_params = delay_params or DelayParams.for_graph(graph)
    report = FeasibilityReport(offset_violations=validate_offsets(flows.flows).violations)
    if not flows.flows:
        return report

    h_ns = us_to_ns(flows.hypercycle_us)
    proc_ns = us_to_ns(delay_params.processing_us)
    capacity = shaper_config.queue_capacity
    loads: Dict[Tuple[int, int, int, int], _SlotLoad] = defaultdict(_SlotLoad)

    for flow, tx_end in _source_departures(graph, flows, h_ns, frame_overhead_b):
        group = shaper_config.group(flow.gid)
        t_ns = group.slot_ns
        advance = 2 if group.queues == 3 and flow.qid is Qid.TOLERATING else 1
        path = flow.route.path
        first = path[1]
        arrival = tx_end + us_to_ns(delay_params.propagation_us(path[0], first)) + proc_ns
        slot = arrival // t_ns + advance
        wire = flow.size_b + frame_overhead_b
        cost = 1 if capacity.mode is CapacityMode.FRAMES else flow.size_b
        for node, peer in flow.route.hops()[1:]:
            tx_ns = tx_time_ns(wire, graph.link(node, peer).rate_bps)
            loads[(node, peer, group.gid, slot)].add(cost, wire, tx_ns, flow.id)
            slot += advance

    seen = set()
    for (node, peer, gid, slot) in sorted(loads):
        load = loads[(node, peer, gid, slot)]
        group = shaper_config.group(gid)
        t_ns = group.slot_ns
        m = h_ns // t_ns
        key = (node, peer, gid, slot % m)

        demand_ns = load.tx_ns + _lower_group_demand(loads, shaper_config, node, peer, gid, slot, load)
        link = graph.link(node, peer)
        budget_bytes = t_ns * link.rate_bps // (8 * 10 ** 9)

        if load.cost > capacity.limit and (key, "queue") not in seen:
            seen.add((key, "queue"))
            report.queue_violations.append(QueueViolation(
                node=node, peer=peer, gid=gid, slot=slot % m, occupancy=load.cost, q_len=capacity.limit))
        if (load.wire_bytes > budget_bytes or demand_ns > t_ns) and (key, "bw") not in seen:
            seen.add((key, "bw"))
            report.bandwidth_violations.append(BandwidthViolation(
                node=node, peer=peer, gid=gid, slot=slot % m, wire_bytes=load.wire_bytes,
                budget_bytes=budget_bytes, demand_ns=demand_ns, slot_ns=t_ns))
        if graph.node(peer).is_switch and (key, "align") not in seen:
            latest = demand_ns + us_to_ns(delay_params.propagation_us(node, peer)) + proc_ns
            if latest >= t_ns:
                seen.add((key, "align"))
                report.alignment_violations.append(AlignmentViolation(
                    node=node, peer=peer, gid=gid, slot=slot % m, latest_arrival_ns=latest, slot_ns=t_ns))

    logger.info(f"Feasibility: {report.verdict} ({len(report.queue_violations)} queue, "
                f"{len(report.bandwidth_violations)} bandwidth, {len(report.alignment_violations)} alignment, "
                f"{len(report.offset_violations)} offset violations)")
    return report


def _lower_group_demand(loads: Dict[Tuple[int, int, int, int], _SlotLoad], shaper_config: ShaperConfig,
                        node: int, peer: int, gid: int, slot: int, own: _SlotLoad) -> int:
    """
    Link time taken inside a slot of group `gid` by lower groups on the same
    port, plus one of the group's largest frames per inner lower-group
    boundary that it may have to hold off across.
    """
    if shaper_config.single_group:
        return 0
    t_ns = shaper_config.group(gid).slot_ns
    start, end = slot * t_ns, (slot + 1) * t_ns
    demand = 0
    inner = set()
    for lower in shaper_config.groups:
        if lower.gid >= gid:
            continue
        lt = lower.slot_ns
        for s in range(start // lt, -(-end // lt)):
            lower_load = loads.get((node, peer, lower.gid, s))
            if lower_load is not None:
                demand += lower_load.tx_ns
            if start < s * lt < end:
                inner.add(s * lt)
    return demand + len(inner) * own.max_tx_ns


# --- trace validation

class FlowValidation(BaseModel):
    flow_id: int
    delivered: int
    min_us: Optional[float] = None
    mean_us: Optional[float] = None
    max_us: Optional[float] = None
    bcd_us: float
    wcd_us: float
    passed: bool


class ValidationReport(BaseModel):
    flows: List[FlowValidation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(f.passed for f in self.flows)

    def by_id(self) -> Dict[int, FlowValidation]:
        return {f.flow_id: f for f in self.flows}


def validate_traces(traces: TraceSet, bounds: Iterable[DelayBounds], eps_us: float = EPS_US) -> ValidationReport:
    """
    Check every measured delay against its flow's bounds.

    Raises:
        MissingFlow: Traces and bounds do not cover the same flows
    """
    bounds_by_id = {b.flow_id: b for b in bounds}
    trace_ids = set(traces.flow_ids)
    missing = trace_ids.symmetric_difference(bounds_by_id)
    if missing:
        raise MissingFlow(f"flows {sorted(missing)} lack either traces or bounds")

    report = ValidationReport()
    for flow_id in sorted(bounds_by_id):
        b = bounds_by_id[flow_id]
        delays = np.array([f.delay_ns for f in traces.measured(flow_id)], dtype=np.int64)
        if delays.size == 0:
            report.flows.append(FlowValidation(
                flow_id=flow_id, delivered=0, bcd_us=b.bcd_us, wcd_us=b.wcd_us, passed=True))
            continue
        lo, hi = ns_to_us(int(delays.min())), ns_to_us(int(delays.max()))
        mean = ns_to_us(int(delays.sum()) / delays.size)
        passed = lo >= b.bcd_us - eps_us and hi <= b.wcd_us + eps_us
        if not passed:
            logger.warning(f"Flow {flow_id}: delays [{lo}, {hi}] us outside bounds [{b.bcd_us}, {b.wcd_us}] us")
        report.flows.append(FlowValidation(
            flow_id=flow_id, delivered=int(delays.size), min_us=lo, mean_us=mean, max_us=hi,
            bcd_us=b.bcd_us, wcd_us=b.wcd_us, passed=passed))
    return report
