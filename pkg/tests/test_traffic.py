import pytest

from conftest import make_flow
from cyclicsim.errors import (
    EmptyFlowSet,
    HypercycleOverflow,
    InvalidParameter,
    OffsetConstraintViolation,
    UnknownFlowId,
    ValidationError,
)
from cyclicsim.shaper import ShaperKind, default_shaper_config
from cyclicsim.topology import generate_one_switch, generate_ring
from cyclicsim.traffic import (
    FlowSet,
    Qid,
    ScheduleEntry,
    apply_schedule,
    check_routes,
    generate_flows,
    hypercycle,
    validate_offsets,
    with_shaper_defaults,
)


@pytest.mark.parametrize("periods,expected", [
    ([100, 200, 400], 400),
    ([100, 150], 300),
    ([250], 250),
    ([64, 96, 1000], 24000),
])
def test_hypercycle(periods, expected):
    assert hypercycle(periods) == expected


def test_hypercycle_errors():
    with pytest.raises(EmptyFlowSet):
        hypercycle([])
    with pytest.raises(InvalidParameter):
        hypercycle([100, 0])
    with pytest.raises(HypercycleOverflow):
        hypercycle([2 ** 61 - 1, 2 ** 61 - 3])


def test_flow_rejects_route_mismatch(one_switch):
    flow = make_flow(one_switch, 1, 1, 2)
    with pytest.raises(ValueError):
        flow.model_validate({**flow.model_dump(), "dst": 3})


def test_flow_priority_is_fixed_at_seven(one_switch):
    flow = make_flow(one_switch, 1, 1, 2)
    assert flow.priority == 7
    with pytest.raises(ValueError):
        flow.model_validate({**flow.model_dump(), "priority": 5})


def test_flowset_rejects_duplicate_ids(one_switch):
    flow = make_flow(one_switch, 1, 1, 2)
    with pytest.raises(ValueError):
        FlowSet(flows=(flow, flow))


def test_validate_offsets(one_switch):
    flows = [
        make_flow(one_switch, 1, 1, 2, period_us=100, phi_us=0),
        make_flow(one_switch, 2, 1, 2, period_us=100, phi_us=100),
        make_flow(one_switch, 3, 1, 2, period_us=100, phi_us=120),
        make_flow(one_switch, 4, 1, 2, period_us=100, phi_us=-1),
    ]
    report = validate_offsets(flows)
    assert not report.ok
    assert [v.flow_id for v in report.violations] == [3, 4]


def test_generate_flows_is_deterministic():
    graph = generate_ring(4, 2)
    a = generate_flows(graph, 20, seed=5)
    b = generate_flows(graph, 20, seed=5)
    assert a == b
    assert [f.id for f in a] == list(range(1, 21))
    assert all(f.period_us in (100, 200, 400) for f in a)
    assert all(55 <= f.size_b <= 1500 for f in a)
    assert all(f.phi_us == 0 and f.deadline_us == f.period_us for f in a)
    assert all(f.src != f.dst for f in a)
    assert all(f.gid == 1 and f.qid is Qid.NORMAL for f in a)


def test_generate_flows_weights():
    graph = generate_ring(4, 2)
    flows = generate_flows(graph, 60, gid_weights={2: 1, 3: 1}, qid_weights={Qid.TOLERATING: 1}, seed=2)
    assert {f.gid for f in flows} <= {2, 3}
    assert {f.qid for f in flows} == {Qid.TOLERATING}


def test_generate_flows_rejects_bad_payload():
    with pytest.raises(InvalidParameter):
        generate_flows(generate_one_switch(2), 1, payload_range=(10, 100))


def test_generate_zero_flows():
    assert len(generate_flows(generate_one_switch(2), 0)) == 0


def test_apply_schedule(one_switch):
    flows = FlowSet(flows=(make_flow(one_switch, 1, 1, 2, period_us=200), make_flow(one_switch, 2, 3, 2)))
    scheduled = apply_schedule(flows, [ScheduleEntry(id=1, phi_us=50, gid=2, qid=Qid.TOLERATING)])
    first = scheduled.by_id()[1]
    assert (first.phi_us, first.gid, first.qid) == (50, 2, Qid.TOLERATING)
    assert scheduled.by_id()[2] == flows.by_id()[2]


def test_apply_schedule_errors(one_switch):
    flows = FlowSet(flows=(make_flow(one_switch, 1, 1, 2, period_us=200),))
    with pytest.raises(UnknownFlowId):
        apply_schedule(flows, [ScheduleEntry(id=9, phi_us=0)])
    with pytest.raises(OffsetConstraintViolation):
        apply_schedule(flows, [ScheduleEntry(id=1, phi_us=250)])


def test_with_shaper_defaults(one_switch):
    flows = FlowSet(flows=(make_flow(one_switch, 1, 1, 2), make_flow(one_switch, 2, 3, 2, gid=3)))
    filled = with_shaper_defaults(flows, default_shaper_config(ShaperKind.MCQF))
    assert [(f.gid, f.qid) for f in filled] == [(1, Qid.NORMAL), (3, Qid.NORMAL)]


def test_check_routes_against_other_graph(one_switch):
    flows = FlowSet(flows=(make_flow(one_switch, 1, 1, 3),))
    with pytest.raises(ValidationError):
        check_routes(generate_one_switch(2), flows)
