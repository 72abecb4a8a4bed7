"""
Per-egress-port cyclic shaper state.

Each port holds one or more queue groups. A group owns a slot clock and a ring
of two or three queues; at every slot boundary the transmit role advances to
the next queue in the ring and the others receive. CQF is one 2-queue group,
3-queue CQF one 3-queue group, MCQF several groups with their own slot
lengths sharing the port.

Queue roles rotate on the absolute slot number (local time // slot length) so
the ring stays continuous across hypercycle boundaries; slot_index reports the
slot position inside the hypercycle.
"""
import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Deque, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from cyclicsim.errors import InvalidParameter, MissingQid, QueueOverflow, UnknownGroup, ValidationError
from cyclicsim.traffic import Qid
from cyclicsim.units import Number, us_to_ns

if TYPE_CHECKING:
    from cyclicsim.engine import Frame

logger = logging.getLogger(__name__)

DEFAULT_SLOT_US = 50
DEFAULT_MCQF_SLOTS_US = (25, 50, 100)
DEFAULT_QUEUE_LIMIT_FRAMES = 128


class ShaperKind(str, Enum):
    CQF = "cqf"
    THREE_QUEUE = "3q"
    MCQF = "mcqf"


class CapacityMode(str, Enum):
    FRAMES = "frames"
    BYTES = "bytes"


class QueueCapacity(BaseModel):
    """Q_len of every cyclic queue on a port, in frames or bytes."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: CapacityMode = CapacityMode.FRAMES
    limit: int = Field(default=DEFAULT_QUEUE_LIMIT_FRAMES, gt=0)


class GroupConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gid: int = Field(ge=1)
    slot_us: float = Field(gt=0)
    queues: Literal[2, 3] = 2

    @property
    def slot_ns(self) -> int:
        return us_to_ns(self.slot_us)


class ShaperConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ShaperKind
    groups: Tuple[GroupConfig, ...]
    queue_capacity: QueueCapacity = QueueCapacity()

    @model_validator(mode="after")
    def _check_groups(self) -> "ShaperConfig":
        if not self.groups:
            raise ValueError("a shaper needs at least one group")
        if self.kind is ShaperKind.CQF and (len(self.groups) != 1 or self.groups[0].queues != 2):
            raise ValueError("CQF needs exactly one group with 2 queues")
        if self.kind is ShaperKind.THREE_QUEUE and (len(self.groups) != 1 or self.groups[0].queues != 3):
            raise ValueError("3-queue CQF needs exactly one group with 3 queues")
        gids = [g.gid for g in self.groups]
        if len(gids) != len(set(gids)):
            raise ValueError("group ids must be distinct")
        return self

    @property
    def single_group(self) -> bool:
        return self.kind is not ShaperKind.MCQF

    def group(self, gid: Optional[int]) -> GroupConfig:
        """Group serving a flow tagged `gid` (CQF/3-queue: the single group)."""
        if self.single_group:
            return self.groups[0]
        for group in self.groups:
            if group.gid == gid:
                return group
        raise UnknownGroup(f"group {gid} is not configured (have {[g.gid for g in self.groups]})")

    def validate_hypercycle(self, hypercycle_us: int) -> None:
        """Every slot length must divide the hypercycle."""
        h_ns = us_to_ns(hypercycle_us)
        for group in self.groups:
            if group.slot_ns <= 0 or h_ns % group.slot_ns:
                raise ValidationError(
                    f"slot {group.slot_us} us of group {group.gid} does not divide hypercycle {hypercycle_us} us")


def default_shaper_config(kind: ShaperKind,
                          slots_us: Optional[Sequence[Number]] = None,
                          capacity: Optional[QueueCapacity] = None) -> ShaperConfig:
    """
    Standard parameterization: CQF/3-queue T=50 us; MCQF G1 (3 queues) 25 us,
    G2 50 us, G3 100 us.
    """
    kind = ShaperKind(kind)
    capacity = capacity or QueueCapacity()
    if kind is ShaperKind.MCQF:
        slots = list(slots_us) if slots_us else list(DEFAULT_MCQF_SLOTS_US)
        groups = tuple(
            GroupConfig(gid=index + 1, slot_us=slot, queues=3 if index == 0 else 2)
            for index, slot in enumerate(slots)
        )
    else:
        slot = slots_us[0] if slots_us else DEFAULT_SLOT_US
        groups = (GroupConfig(gid=1, slot_us=slot, queues=2 if kind is ShaperKind.CQF else 3),)
    return ShaperConfig(kind=kind, groups=groups, queue_capacity=capacity)


@dataclass(frozen=True)
class SlotClock:
    slot_ns: int
    hypercycle_ns: int

    def __post_init__(self):
        if self.slot_ns <= 0 or self.hypercycle_ns % self.slot_ns:
            raise InvalidParameter(f"slot {self.slot_ns} ns must divide hypercycle {self.hypercycle_ns} ns")

    @property
    def slot_count(self) -> int:
        return self.hypercycle_ns // self.slot_ns

    def index(self, t_ns: int) -> int:
        return (t_ns % self.hypercycle_ns) // self.slot_ns

    def absolute(self, t_ns: int) -> int:
        return t_ns // self.slot_ns

    def boundary_ns(self, absolute_slot: int) -> int:
        return absolute_slot * self.slot_ns


def slot_index(t_us: Number, clock: SlotClock) -> int:
    """Slot number j inside the hypercycle; boundaries belong to the new slot."""
    if t_us < 0:
        raise InvalidParameter(f"t must be >= 0, got {t_us}")
    return clock.index(us_to_ns(t_us))


def transmitting_queue(group: GroupConfig, j: int) -> int:
    return j % group.queues


class QueueState:
    """FIFO cyclic queue with a Q_len capacity in frames or bytes."""

    def __init__(self, capacity: QueueCapacity):
        self.mode = capacity.mode
        self.q_len = capacity.limit
        self.frames: Deque["Frame"] = deque()
        self.occupied = 0
        self.peak = 0

    @property
    def free(self) -> int:
        return self.q_len - self.occupied

    def cost(self, frame: "Frame") -> int:
        return 1 if self.mode is CapacityMode.FRAMES else frame.size_b

    def offer(self, frame: "Frame") -> bool:
        cost = self.cost(frame)
        if self.free < cost:
            return False
        self.frames.append(frame)
        self.occupied += cost
        self.peak = max(self.peak, self.occupied)
        return True

    def drain(self) -> List["Frame"]:
        frames = list(self.frames)
        self.frames.clear()
        self.occupied = 0
        return frames

    def requeue_front(self, frames: Iterable["Frame"]) -> None:
        """Put deferred frames back at the head, preserving their order."""
        frames = list(frames)
        for frame in reversed(frames):
            self.frames.appendleft(frame)
            self.occupied += self.cost(frame)
        self.peak = max(self.peak, self.occupied)

    def __len__(self) -> int:
        return len(self.frames)


def enqueue(frame: "Frame", queue: QueueState) -> None:
    """
    Store a frame if Q_free covers its cost.

    Raises:
        QueueOverflow: Q_free < cost; the frame is not stored
    """
    if not queue.offer(frame):
        raise QueueOverflow(
            f"frame {frame.flow_id}/{frame.seq} needs {queue.cost(frame)}, only {queue.free} of {queue.q_len} free")


class GroupState:
    def __init__(self, config: GroupConfig, clock: SlotClock, capacity: QueueCapacity, current_slot: int):
        self.config = config
        self.clock = clock
        self.queues = [QueueState(capacity) for _ in range(config.queues)]
        self.current_slot = current_slot
        self.transmitting = current_slot % config.queues

    @property
    def gid(self) -> int:
        return self.config.gid

    @property
    def slot_ns(self) -> int:
        return self.clock.slot_ns


class PortShaper:
    """Cyclic shaper of one egress port (node -> peer)."""

    def __init__(self, node: int, peer: int, config: ShaperConfig, hypercycle_ns: int, t_local_ns: int = 0):
        self.node = node
        self.peer = peer
        self.config = config
        self.groups: Dict[int, GroupState] = {}
        for group in sorted(config.groups, key=lambda g: g.gid):
            clock = SlotClock(slot_ns=group.slot_ns, hypercycle_ns=hypercycle_ns)
            self.groups[group.gid] = GroupState(group, clock, config.queue_capacity, clock.absolute(t_local_ns))

    def group_for(self, gid: Optional[int]) -> GroupState:
        return self.groups[self.config.group(gid).gid]

    def queue(self, gid: int, index: int) -> QueueState:
        return self.groups[gid].queues[index]


def classify(frame: "Frame", port: PortShaper, t_local_ns: int) -> Tuple[int, int]:
    """
    Pick the (group, queue index) a frame arriving at local time t enters.

    2-queue groups: the queue that transmits in the next slot. 3-queue groups:
    Normal frames go to the queue transmitting in slot j+1, Tolerating frames
    to the one transmitting in slot j+2.

    Raises:
        UnknownGroup: MCQF frame tagged with an unconfigured gid
        MissingQid: 3-queue group and the frame carries no qid
    """
    group = port.group_for(frame.gid)
    j = group.clock.absolute(t_local_ns)
    if group.config.queues == 2:
        return group.gid, (j + 1) % 2
    if frame.qid is None:
        raise MissingQid(f"frame {frame.flow_id}/{frame.seq} has no qid for 3-queue group {group.gid}")
    advance = 2 if frame.qid is Qid.TOLERATING else 1
    return group.gid, (j + advance) % 3


def rotate(port: PortShaper, gid: int, new_slot: int) -> List["Frame"]:
    """
    Advance group `gid` to absolute slot `new_slot` and drain the queue that
    now transmits. The returned frames are eligible for transmission in FIFO
    order during this slot.
    """
    group = port.groups[gid]
    group.current_slot = new_slot
    group.transmitting = transmitting_queue(group.config, new_slot)
    return group.queues[group.transmitting].drain()
