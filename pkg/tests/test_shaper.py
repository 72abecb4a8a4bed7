import pytest

from cyclicsim.engine import Frame
from cyclicsim.errors import InvalidParameter, MissingQid, QueueOverflow, UnknownGroup, ValidationError
from cyclicsim.shaper import (
    CapacityMode,
    GroupConfig,
    PortShaper,
    QueueCapacity,
    QueueState,
    ShaperConfig,
    ShaperKind,
    SlotClock,
    classify,
    default_shaper_config,
    enqueue,
    rotate,
    slot_index,
    transmitting_queue,
)
from cyclicsim.traffic import Qid

H_NS = 400_000


def frame(seq=0, size_b=100, gid=None, qid=None, flow_id=1):
    return Frame(flow_id=flow_id, seq=seq, size_b=size_b, wire_b=size_b + 42, emission_ns=0,
                 route=(1, 0, 2), gid=gid, qid=qid)


def test_default_configs():
    cqf = default_shaper_config(ShaperKind.CQF)
    assert [(g.gid, g.slot_us, g.queues) for g in cqf.groups] == [(1, 50, 2)]
    three = default_shaper_config(ShaperKind.THREE_QUEUE)
    assert [(g.gid, g.slot_us, g.queues) for g in three.groups] == [(1, 50, 3)]
    mcqf = default_shaper_config(ShaperKind.MCQF)
    assert [(g.gid, g.slot_us, g.queues) for g in mcqf.groups] == [(1, 25, 3), (2, 50, 2), (3, 100, 2)]
    assert mcqf.queue_capacity == QueueCapacity(mode=CapacityMode.FRAMES, limit=128)


def test_custom_slots():
    config = default_shaper_config("mcqf", [20, 40])
    assert [(g.gid, g.slot_us) for g in config.groups] == [(1, 20), (2, 40)]
    assert default_shaper_config("cqf", [25]).groups[0].slot_us == 25


def test_config_invariants():
    with pytest.raises(ValueError):
        ShaperConfig(kind=ShaperKind.CQF, groups=(GroupConfig(gid=1, slot_us=50, queues=3),))
    with pytest.raises(ValueError):
        ShaperConfig(kind=ShaperKind.MCQF, groups=(GroupConfig(gid=1, slot_us=50), GroupConfig(gid=1, slot_us=25)))
    with pytest.raises(ValueError):
        GroupConfig(gid=1, slot_us=0)


def test_slot_must_divide_hypercycle():
    config = default_shaper_config(ShaperKind.CQF, [30])
    with pytest.raises(ValidationError):
        config.validate_hypercycle(400)
    default_shaper_config(ShaperKind.MCQF).validate_hypercycle(400)


@pytest.mark.parametrize("slot_us,count", [(25, 16), (50, 8), (100, 4)])
def test_slot_counts_in_hypercycle(slot_us, count):
    assert SlotClock(slot_ns=slot_us * 1000, hypercycle_ns=H_NS).slot_count == count


@pytest.mark.parametrize("t_us,expected", [(0, 0), (49.999, 0), (50, 1), (399, 7), (400, 0), (475, 1)])
def test_slot_index(t_us, expected):
    assert slot_index(t_us, SlotClock(slot_ns=50_000, hypercycle_ns=H_NS)) == expected


def test_slot_index_rejects_negative_time():
    with pytest.raises(InvalidParameter):
        slot_index(-1, SlotClock(slot_ns=50_000, hypercycle_ns=H_NS))


def test_transmitting_queue_rotation():
    three = GroupConfig(gid=1, slot_us=50, queues=3)
    assert transmitting_queue(three, 4) == 1
    sequence = [transmitting_queue(three, j) for j in range(12)]
    assert all(a != b for a, b in zip(sequence, sequence[1:]))
    assert [transmitting_queue(GroupConfig(gid=1, slot_us=50), j) for j in range(4)] == [0, 1, 0, 1]


def test_classify_cqf_uses_receiving_queue():
    port = PortShaper(0, 2, default_shaper_config(ShaperKind.CQF), H_NS)
    assert classify(frame(), port, 10_000) == (1, 1)
    assert classify(frame(), port, 60_000) == (1, 0)


def test_classify_three_queue():
    port = PortShaper(0, 2, default_shaper_config(ShaperKind.THREE_QUEUE), H_NS)
    assert classify(frame(qid=Qid.NORMAL), port, 10_000) == (1, 1)
    assert classify(frame(qid=Qid.TOLERATING), port, 10_000) == (1, 2)
    with pytest.raises(MissingQid):
        classify(frame(qid=None), port, 10_000)


def test_classify_mcqf_uses_the_frames_group_clock():
    port = PortShaper(0, 2, default_shaper_config(ShaperKind.MCQF), H_NS)
    assert classify(frame(gid=2), port, 30_000) == (2, 1)
    assert classify(frame(gid=3), port, 30_000) == (3, 1)
    assert classify(frame(gid=1, qid=Qid.NORMAL), port, 30_000) == (1, 2)
    with pytest.raises(UnknownGroup):
        classify(frame(gid=5), port, 30_000)


def test_enqueue_bytes_capacity():
    queue = QueueState(QueueCapacity(mode=CapacityMode.BYTES, limit=3000))
    enqueue(frame(size_b=1500), queue)
    assert (queue.occupied, queue.free) == (1500, 1500)

    queue = QueueState(QueueCapacity(mode=CapacityMode.BYTES, limit=3000))
    enqueue(frame(size_b=1400, seq=0), queue)
    enqueue(frame(size_b=600, seq=1), queue)
    with pytest.raises(QueueOverflow):
        enqueue(frame(size_b=1500, seq=2), queue)
    assert queue.occupied == 2000
    assert queue.occupied + queue.free == queue.q_len


def test_enqueue_frame_capacity():
    queue = QueueState(QueueCapacity(limit=2))
    enqueue(frame(seq=0), queue)
    enqueue(frame(seq=1), queue)
    with pytest.raises(QueueOverflow):
        enqueue(frame(seq=2), queue)
    assert len(queue) == 2
    assert queue.peak == 2


def test_requeue_front_keeps_order():
    queue = QueueState(QueueCapacity(limit=8))
    enqueue(frame(seq=5), queue)
    queue.requeue_front([frame(seq=1), frame(seq=2)])
    assert [f.seq for f in queue.drain()] == [1, 2, 5]
    assert queue.occupied == 0


def test_rotate_two_queue_drains_previous_slot():
    port = PortShaper(0, 2, default_shaper_config(ShaperKind.CQF), H_NS)
    for seq in range(3):
        gid, index = classify(frame(seq=seq), port, 10_000)
        enqueue(frame(seq=seq), port.queue(gid, index))
    drained = rotate(port, 1, 1)
    assert [f.seq for f in drained] == [0, 1, 2]
    assert port.groups[1].transmitting == 1
    assert rotate(port, 1, 2) == []


def test_rotate_three_queue_tolerating_waits_one_more_slot():
    port = PortShaper(0, 2, default_shaper_config(ShaperKind.THREE_QUEUE), H_NS)
    tolerating = frame(qid=Qid.TOLERATING)
    gid, index = classify(tolerating, port, 10_000)
    enqueue(tolerating, port.queue(gid, index))
    assert rotate(port, 1, 1) == []
    assert rotate(port, 1, 2) == [tolerating]
