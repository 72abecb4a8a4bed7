"""
Discrete-event simulation of TT frames through cyclic shapers.

Time is integer nanoseconds. A run emits every flow's frames during
[0, hypercycles * H), transmits them from ungated source end stations,
propagates and processes them at each switch, classifies them into the
egress port's cyclic queues and forwards them when the queue's slot opens.
Slot-boundary events are processed before frame arrivals, and arrivals
before transmission completions, at equal timestamps.
"""
import heapq
import json
import logging
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from cyclicsim.errors import MissingQid, QueueOverflow, UnknownHop, ValidationError
from cyclicsim.shaper import GroupState, PortShaper, ShaperConfig, classify, enqueue, rotate
from cyclicsim.topology import DEFAULT_PROP_DELAY_US, NetworkGraph
from cyclicsim.traffic import Flow, FlowSet, Qid, check_routes, validate_offsets
from cyclicsim.units import NS_PER_US, ns_to_us, tx_time_ns, us_to_ns

logger = logging.getLogger(__name__)

DEFAULT_PROCESSING_US = 1.0
DEFAULT_FRAME_OVERHEAD_B = 42

BOUNDARY, ARRIVAL, TX_DONE = 0, 1, 2

DROP_QUEUE_OVERFLOW = "queue_overflow"
DROP_EXCEEDS_SLOT = "exceeds_slot"
DROP_UNDELIVERED = "undelivered"


class DelayParams(BaseModel):
    """Network delays: per-switch processing, per-link propagation, clock sync error."""
    model_config = ConfigDict(frozen=True)

    processing_us: float = Field(default=DEFAULT_PROCESSING_US, ge=0)
    sync_error_bound_us: float = Field(default=0.0, ge=0)
    default_propagation_us: float = Field(default=DEFAULT_PROP_DELAY_US, ge=0)
    propagation: Dict[Tuple[int, int], float] = Field(default_factory=dict)

    @classmethod
    def for_graph(cls, graph: NetworkGraph, processing_us: float = DEFAULT_PROCESSING_US,
                  sync_error_bound_us: float = 0.0) -> "DelayParams":
        """Take per-link propagation delays from the graph's links."""
        return cls(
            processing_us=processing_us,
            sync_error_bound_us=sync_error_bound_us,
            propagation={link.key: link.prop_delay_us for link in graph.links},
        )

    def propagation_us(self, a: int, b: int) -> float:
        return self.propagation.get((min(a, b), max(a, b)), self.default_propagation_us)

    def clock_offsets_ns(self, switches: Iterable[int], seed: int) -> Dict[int, int]:
        """Constant per-switch clock offsets in [-bound, +bound], drawn from the seed."""
        bound_ns = us_to_ns(self.sync_error_bound_us)
        rng = random.Random(seed)
        return {node: rng.randint(-bound_ns, bound_ns) if bound_ns else 0 for node in sorted(switches)}


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hypercycles: int = Field(default=10, ge=1)
    warmup_hypercycles: int = Field(default=0, ge=0)
    seed: int = 0
    frame_overhead_b: int = Field(default=DEFAULT_FRAME_OVERHEAD_B, ge=0)
    # margin on top of the worst-case path latency while frames are still in flight
    drain_hypercycles: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_warmup(self) -> "SimConfig":
        if self.warmup_hypercycles >= self.hypercycles:
            raise ValueError("hypercycles must exceed warmup_hypercycles")
        return self


@dataclass
class HopRecord:
    node: int
    peer: int
    arrival_ns: int
    enqueue_ns: int
    dequeue_ns: Optional[int] = None
    tx_start_ns: Optional[int] = None
    tx_end_ns: Optional[int] = None


@dataclass
class Frame:
    flow_id: int
    seq: int
    size_b: int
    wire_b: int
    emission_ns: int
    route: Tuple[int, ...]
    gid: Optional[int] = None
    qid: Optional[Qid] = None
    warmup: bool = False
    position: int = 0
    hops: List[HopRecord] = field(default_factory=list)
    delivery_ns: Optional[int] = None
    dropped: Optional[str] = None

    @property
    def key(self) -> Tuple[int, int]:
        return self.flow_id, self.seq

    @property
    def delay_ns(self) -> Optional[int]:
        if self.delivery_ns is None:
            return None
        return self.delivery_ns - self.emission_ns

    @property
    def delay_us(self) -> Optional[float]:
        delay = self.delay_ns
        return None if delay is None else ns_to_us(delay)

    def hop(self, node: int) -> HopRecord:
        for record in self.hops:
            if record.node == node:
                return record
        raise UnknownHop(f"frame {self.flow_id}/{self.seq} did not traverse node {node}")

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "emission_ns": self.emission_ns,
            "delivery_ns": self.delivery_ns,
            "warmup": self.warmup,
            "hops": [asdict(h) for h in self.hops],
        }


@dataclass(frozen=True)
class DropRecord:
    flow_id: int
    seq: int
    node: int
    reason: str
    time_ns: int
    warmup: bool = False


@dataclass(frozen=True)
class OverrunRecord:
    """A frame that could not finish inside its transmitting slot and was held over."""
    node: int
    peer: int
    gid: int
    flow_id: int
    seq: int
    time_ns: int


class TraceSet:
    """Everything a run observed, per flow."""

    def __init__(self, flow_ids: Iterable[int] = ()):
        self.flow_ids: List[int] = sorted(flow_ids)
        self.emitted: Dict[int, int] = {fid: 0 for fid in self.flow_ids}
        self.delivered: Dict[int, List[Frame]] = {fid: [] for fid in self.flow_ids}
        self.drops: List[DropRecord] = []
        self.overruns: List[OverrunRecord] = []
        self.peak_occupancy: Dict[str, int] = {}
        self.events = 0

    def measured(self, flow_id: int) -> List[Frame]:
        """Delivered frames outside the warmup window."""
        return [f for f in self.delivered.get(flow_id, []) if not f.warmup]

    def delays_us(self, flow_id: int) -> List[float]:
        return [f.delay_us for f in self.measured(flow_id)]

    def dropped(self, flow_id: int, include_warmup: bool = False) -> int:
        return sum(1 for d in self.drops if d.flow_id == flow_id and (include_warmup or not d.warmup))

    @property
    def total_delivered(self) -> int:
        return sum(len(frames) for frames in self.delivered.values())

    @property
    def total_emitted(self) -> int:
        return sum(self.emitted.values())

    def to_dict(self) -> dict:
        return {
            "flows": {
                str(fid): {
                    "emitted": self.emitted[fid],
                    "delivered": [f.to_dict() for f in self.delivered[fid]],
                }
                for fid in self.flow_ids
            },
            "drops": [asdict(d) for d in self.drops],
            "overruns": [asdict(o) for o in self.overruns],
            "peak_occupancy": dict(sorted(self.peak_occupancy.items())),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TraceSet):
            return NotImplemented
        return self.to_dict() == other.to_dict()


class _Port:
    """Egress port node -> peer. Switch ports carry a shaper, source ports a plain FIFO."""

    def __init__(self, node: int, peer: int, rate_bps: int, prop_ns: int, offset_ns: int,
                 shaper: Optional[PortShaper] = None):
        self.node = node
        self.peer = peer
        self.rate_bps = rate_bps
        self.prop_ns = prop_ns
        self.offset_ns = offset_ns
        self.shaper = shaper
        self.fifo: Deque[Frame] = deque()
        self.eligible: Dict[int, Deque[Frame]] = {gid: deque() for gid in (shaper.groups if shaper else {})}
        self.busy_until = 0

    def tx_ns(self, frame: Frame) -> int:
        return tx_time_ns(frame.wire_b, self.rate_bps)

    def boundary_ns(self, group: GroupState, absolute_slot: int) -> int:
        """Global time at which this port's local clock reaches the slot."""
        return group.clock.boundary_ns(absolute_slot) - self.offset_ns

    def slot_limit_ns(self, gid: int) -> int:
        """Longest transmission that fits a slot of `gid` and of every lower group."""
        return min(g.slot_ns for g_id, g in self.shaper.groups.items() if g_id <= gid)


def validate_inputs(graph: NetworkGraph, flowset: FlowSet, shaper_config: ShaperConfig) -> None:
    """
    Static checks a scenario must pass before it can run.

    Raises:
        ValidationError: Broken routes, offsets, or slot lengths not dividing H
        UnknownGroup: A flow's gid is not configured
        MissingQid: A flow mapped to a 3-queue group carries no qid
    """
    check_routes(graph, flowset)
    if not flowset.flows:
        return
    report = validate_offsets(flowset.flows)
    if not report.ok:
        bad = ", ".join(str(v.flow_id) for v in report.violations)
        raise ValidationError(f"offsets outside [0, period] for flows {bad}")
    shaper_config.validate_hypercycle(flowset.hypercycle_us)
    for flow in flowset.flows:
        group = shaper_config.group(flow.gid)
        if group.queues == 3 and flow.qid is None:
            raise MissingQid(f"flow {flow.id} needs a qid for 3-queue group {group.gid}")


class Simulator:
    """
    One deterministic run over a fixed scenario.

    Args:
        graph: Topology
        flowset: Flows with routes, offsets and gid/qid tags
        shaper_config: Shaper applied at every switch egress port
        delay_params: Processing, propagation and sync-error parameters
        sim_config: Horizon, warmup, seed and frame overhead
    """

    def __init__(self, graph: NetworkGraph, flowset: FlowSet, shaper_config: ShaperConfig,
                 delay_params: DelayParams, sim_config: SimConfig):
        self.graph = graph
        self.flowset = flowset
        self.shaper_config = shaper_config
        self.delay_params = delay_params
        self.sim_config = sim_config

        self.traces = TraceSet(f.id for f in flowset.flows)
        self._queue: List[tuple] = []
        self._counter = 0
        self._now = 0
        self._in_flight: Dict[Tuple[int, int], Frame] = {}
        self._ports: Dict[Tuple[int, int], _Port] = {}
        self._processing_ns = us_to_ns(delay_params.processing_us)

    def _push(self, t: int, kind: int, node: int, a: int, b: int, payload) -> None:
        self._counter += 1
        heapq.heappush(self._queue, (t, kind, node, a, b, self._counter, payload))

    def _build_ports(self, hypercycle_ns: int) -> None:
        offsets = self.delay_params.clock_offsets_ns(self.graph.switches(), self.sim_config.seed)
        for link in self.graph.links:
            for node, peer in ((link.a, link.b), (link.b, link.a)):
                prop_ns = us_to_ns(self.delay_params.propagation_us(node, peer))
                if self.graph.node(node).is_switch:
                    offset = offsets[node]
                    # shaper state just before global time 0
                    shaper = PortShaper(node, peer, self.shaper_config, hypercycle_ns, t_local_ns=offset - 1)
                    port = _Port(node, peer, link.rate_bps, prop_ns, offset, shaper)
                else:
                    port = _Port(node, peer, link.rate_bps, prop_ns, 0)
                self._ports[(node, peer)] = port

    def _schedule_first_boundaries(self) -> None:
        for (node, peer), port in sorted(self._ports.items()):
            if port.shaper is None:
                continue
            for gid, group in port.shaper.groups.items():
                k = group.current_slot + 1
                self._push(port.boundary_ns(group, k), BOUNDARY, node, peer, gid, k)

    def _schedule_emission(self, flow: Flow, seq: int) -> None:
        t = us_to_ns(seq * flow.period_us + flow.phi_us)
        if t >= self._end_ns:
            return
        frame = Frame(
            flow_id=flow.id, seq=seq, size_b=flow.size_b, wire_b=flow.size_b + self.sim_config.frame_overhead_b,
            emission_ns=t, route=flow.route.path, gid=flow.gid, qid=flow.qid, warmup=t < self._warmup_ns,
        )
        self._push(t, ARRIVAL, flow.src, flow.id, seq, (frame, flow))

    def _worst_path_ns(self) -> int:
        """
        Longest time any flow's frame may need end to end: every switch holds
        it for up to a full queue rotation of its group, plus source
        serialization and the network delays along the route.
        """
        longest = 0
        sync_ns = us_to_ns(self.delay_params.sync_error_bound_us)
        for flow in self.flowset.flows:
            group = self.shaper_config.group(flow.gid)
            rotation_ns = group.queues * us_to_ns(group.slot_us)
            network_ns = sum(us_to_ns(self.delay_params.propagation_us(a, b)) for a, b in flow.route.hops())
            source_ns = tx_time_ns(flow.size_b + self.sim_config.frame_overhead_b,
                                   self.graph.link(flow.src, flow.route.path[1]).rate_bps)
            path_ns = ((flow.sw_num + 1) * rotation_ns + network_ns + source_ns
                       + flow.sw_num * self._processing_ns + sync_ns)
            longest = max(longest, path_ns)
        return longest

    def run(self) -> TraceSet:
        if not self.flowset.flows:
            logger.info("No flows; empty trace set")
            return self.traces
        validate_inputs(self.graph, self.flowset, self.shaper_config)

        h_ns = us_to_ns(self.flowset.hypercycle_us)
        self._end_ns = self.sim_config.hypercycles * h_ns
        self._warmup_ns = self.sim_config.warmup_hypercycles * h_ns
        self._drain_limit_ns = self._end_ns + self._worst_path_ns() + self.sim_config.drain_hypercycles * h_ns

        self._build_ports(h_ns)
        self._schedule_first_boundaries()
        for flow in self.flowset.flows:
            self._schedule_emission(flow, 0)

        while self._queue:
            t, kind, node, a, b, _, payload = heapq.heappop(self._queue)
            self._now = t
            self.traces.events += 1
            if kind == BOUNDARY:
                self._on_boundary(self._ports[(node, a)], b, payload, t)
            elif kind == ARRIVAL:
                self._on_arrival(node, payload, t)
            else:
                self._on_tx_done(self._ports[(node, payload.route[payload.position + 1])], payload, t)

        self._finish()
        return self.traces

    # --- event handlers

    def _on_boundary(self, port: _Port, gid: int, slot: int, t: int) -> None:
        group = port.shaper.groups[gid]
        leftover = port.eligible[gid]
        if leftover:
            for frame in leftover:
                self.traces.overruns.append(OverrunRecord(port.node, port.peer, gid, frame.flow_id, frame.seq, t))
                logger.debug(f"Slot overrun at {port.node}->{port.peer} G{gid}: frame {frame.flow_id}/{frame.seq}")
            group.queues[group.transmitting].requeue_front(leftover)
        port.eligible[gid] = deque(rotate(port.shaper, gid, slot))
        self._try_transmit(port, t)

        next_t = port.boundary_ns(group, slot + 1)
        if t < self._end_ns or (self._in_flight and next_t <= self._drain_limit_ns):
            self._push(next_t, BOUNDARY, port.node, port.peer, gid, slot + 1)

    def _on_arrival(self, node: int, payload, t: int) -> None:
        if isinstance(payload, tuple):
            frame, flow = payload
            self._emit(frame, flow, t)
            return

        frame = payload
        if node == frame.route[-1]:
            frame.delivery_ns = t
            self.traces.delivered[frame.flow_id].append(frame)
            del self._in_flight[frame.key]
            return

        port = self._ports[(node, frame.route[frame.position + 1])]
        frame.hops.append(HopRecord(node=node, peer=port.peer, arrival_ns=t - self._processing_ns, enqueue_ns=t))

        group = port.shaper.group_for(frame.gid)
        if port.tx_ns(frame) > port.slot_limit_ns(group.gid):
            self._drop(frame, node, DROP_EXCEEDS_SLOT, t)
            return
        gid, index = classify(frame, port.shaper, t + port.offset_ns)
        try:
            enqueue(frame, port.shaper.queue(gid, index))
        except QueueOverflow as e:
            logger.debug(f"Overflow at {node}->{port.peer}: {e}")
            self._drop(frame, node, DROP_QUEUE_OVERFLOW, t)

    def _emit(self, frame: Frame, flow: Flow, t: int) -> None:
        self.traces.emitted[flow.id] += 1
        self._in_flight[frame.key] = frame
        self._schedule_emission(flow, frame.seq + 1)

        port = self._ports[(flow.src, frame.route[1])]
        frame.hops.append(HopRecord(node=flow.src, peer=port.peer, arrival_ns=t, enqueue_ns=t))
        port.fifo.append(frame)
        self._try_transmit(port, t)

    def _on_tx_done(self, port: _Port, frame: Frame, t: int) -> None:
        frame.position += 1
        arrival = t + port.prop_ns
        if self.graph.node(port.peer).is_switch:
            arrival += self._processing_ns
        self._push(arrival, ARRIVAL, port.peer, frame.flow_id, frame.seq, frame)
        self._try_transmit(port, t)

    # --- transmission

    def _try_transmit(self, port: _Port, now: int) -> None:
        if now < port.busy_until:
            return
        if port.shaper is None:
            if port.fifo:
                self._start_tx(port, port.fifo.popleft(), now)
            return

        groups = port.shaper.groups
        for gid, group in groups.items():
            eligible = port.eligible[gid]
            if not eligible:
                continue
            end = now + port.tx_ns(eligible[0])
            if end > port.boundary_ns(group, group.current_slot + 1):
                continue
            if any(end > port.boundary_ns(lower, lower.current_slot + 1)
                   for lower_gid, lower in groups.items() if lower_gid < gid):
                continue
            self._start_tx(port, eligible.popleft(), now)
            return

    def _start_tx(self, port: _Port, frame: Frame, now: int) -> None:
        end = now + port.tx_ns(frame)
        hop = frame.hops[-1]
        hop.dequeue_ns = now
        hop.tx_start_ns = now
        hop.tx_end_ns = end
        port.busy_until = end
        self._push(end, TX_DONE, port.node, frame.flow_id, frame.seq, frame)

    # --- bookkeeping

    def _drop(self, frame: Frame, node: int, reason: str, t: int) -> None:
        frame.dropped = reason
        self.traces.drops.append(DropRecord(frame.flow_id, frame.seq, node, reason, t, frame.warmup))
        self._in_flight.pop(frame.key, None)

    def _finish(self) -> None:
        for key in sorted(self._in_flight):
            frame = self._in_flight[key]
            node = frame.route[frame.position]
            self._drop(frame, node, DROP_UNDELIVERED, self._now)

        for (node, peer), port in sorted(self._ports.items()):
            if port.shaper is None:
                continue
            for gid, group in port.shaper.groups.items():
                peak = max(q.peak for q in group.queues)
                if peak:
                    self.traces.peak_occupancy[f"{node}->{peer}/G{gid}"] = peak

        delivered = self.traces.total_delivered
        logger.info(f"Run complete: {self.traces.events} events, {self.traces.total_emitted} emitted, "
                    f"{delivered} delivered")
        if self.traces.drops or self.traces.overruns:
            logger.warning(f"{len(self.traces.drops)} drops, {len(self.traces.overruns)} slot overruns")


def run(graph: NetworkGraph, flows: FlowSet, shaper_config: ShaperConfig,
        delay_params: Optional[DelayParams] = None, sim_config: Optional[SimConfig] = None) -> TraceSet:
    """
    Simulate a scenario.

    Args:
        graph: Topology
        flows: Flow set to emit
        shaper_config: Shaper at every switch egress port
        delay_params: Network delays (default: taken from the graph's links)
        sim_config: Run parameters (default: 10 hypercycles, no warmup)

    Returns:
        TraceSet with delivered frames, drops, slot overruns and peak occupancy

    Raises:
        ValidationError: The scenario fails a static check
    """
    delay_params = delay_params or DelayParams.for_graph(graph)
    sim_config = sim_config or SimConfig()
    return Simulator(graph, flows, shaper_config, delay_params, sim_config).run()


def residence_time(frame: Frame, hop: int) -> float:
    """Microseconds frame spent queued at node `hop` (dequeue - enqueue)."""
    record = frame.hop(hop)
    if record.dequeue_ns is None:
        raise UnknownHop(f"frame {frame.flow_id}/{frame.seq} was not dequeued at node {hop}")
    return (record.dequeue_ns - record.enqueue_ns) / NS_PER_US
