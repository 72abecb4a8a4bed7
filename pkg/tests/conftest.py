from typing import Optional

import pytest

from cyclicsim.engine import DelayParams
from cyclicsim.topology import generate_one_switch, generate_ring, shortest_path
from cyclicsim.traffic import Flow, FlowSet, Qid


def make_flow(graph, flow_id: int, src: int, dst: int, period_us: int = 400, size_b: int = 100,
              phi_us: float = 0.0, gid: Optional[int] = None, qid: Optional[Qid] = None) -> Flow:
    return Flow(
        id=flow_id, src=src, dst=dst, period_us=period_us, deadline_us=float(period_us), size_b=size_b,
        route=shortest_path(graph, src, dst), phi_us=phi_us, gid=gid, qid=qid,
    )


@pytest.fixture
def one_switch():
    """SW0 with end stations 1, 2, 3."""
    return generate_one_switch(3)


@pytest.fixture
def ring4():
    """Switches 0..3 in a ring, end stations 4..7 on switches 0..3."""
    return generate_ring(4, 1)


@pytest.fixture
def delays(one_switch):
    return DelayParams.for_graph(one_switch)


@pytest.fixture
def timeline_flows(one_switch):
    """
    Two flows into ES2 for the hand-enumerated timeline:
    flow 1 from ES1 every 400 us (100 B, 1136 ns on the wire), flow 2 from
    ES3 every 200 us at offset 10 us (458 B, 4000 ns on the wire).
    """
    return FlowSet(flows=(
        make_flow(one_switch, 1, 1, 2, period_us=400, size_b=100, phi_us=0),
        make_flow(one_switch, 2, 3, 2, period_us=200, size_b=458, phi_us=10),
    ))
