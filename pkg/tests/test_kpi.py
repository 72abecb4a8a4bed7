import json

import pytest
import yaml

from conftest import make_flow
from cyclicsim.analysis import compute_bounds, validate_traces
from cyclicsim.engine import DROP_QUEUE_OVERFLOW, DropRecord, Frame, SimConfig, TraceSet, run
from cyclicsim.errors import ExportError, MismatchedFlowSets, ParseError
from cyclicsim.kpi import DELAY_CONVENTION, KPI_COLUMNS, FlowKpi, annotate, compare_shapers, compute_kpis, export, load_kpis
from cyclicsim.shaper import ShaperKind, default_shaper_config
from cyclicsim.traffic import FlowSet, Qid


def traces_with(delays_us, flow_id=1, period_us=400):
    traces = TraceSet([flow_id])
    for seq, delay in enumerate(delays_us):
        emission = seq * period_us * 1000
        traces.delivered[flow_id].append(Frame(
            flow_id=flow_id, seq=seq, size_b=100, wire_b=142, emission_ns=emission, route=(1, 0, 2),
            delivery_ns=emission + int(delay * 1000)))
    traces.emitted[flow_id] = len(delays_us)
    return traces


@pytest.fixture
def flows(one_switch):
    return FlowSet(flows=(make_flow(one_switch, 1, 1, 2, gid=1, qid=Qid.NORMAL),))


def test_extrema_and_mean(flows):
    (kpi,) = compute_kpis(traces_with([90, 100, 95]), flows)
    assert (kpi.smd_us, kpi.smj_us, kpi.min_us, kpi.mean_us) == (100, 10, 90, 95)
    assert kpi.delivered == 3 and kpi.deadline_misses == 0


def test_single_delivery_has_no_jitter(flows):
    (kpi,) = compute_kpis(traces_with([42.5]), flows)
    assert kpi.smj_us == 0
    assert kpi.smd_us == kpi.min_us == kpi.mean_us == 42.5


def test_starved_flow(flows):
    (kpi,) = compute_kpis(traces_with([]), flows)
    assert kpi.starved
    assert kpi.smd_us is None and kpi.smj_us is None


def test_deadline_misses_and_drops(flows):
    traces = traces_with([100, 450, 401])
    traces.drops.append(DropRecord(1, 3, 0, DROP_QUEUE_OVERFLOW, 1_200_000))
    traces.drops.append(DropRecord(1, 4, 0, DROP_QUEUE_OVERFLOW, 1_000, warmup=True))
    (kpi,) = compute_kpis(traces, flows)
    assert kpi.deadline_misses == 2
    assert kpi.dropped == 1


def test_kpis_ignore_delivery_order(flows):
    ordered = traces_with([90, 100, 95])
    shuffled = traces_with([90, 100, 95])
    shuffled.delivered[1].reverse()
    assert compute_kpis(ordered, flows) == compute_kpis(shuffled, flows)


def test_annotate_fills_bounds_and_verdict(one_switch, timeline_flows, delays):
    shaper = default_shaper_config(ShaperKind.CQF)
    traces = run(one_switch, timeline_flows, shaper, delays, SimConfig(hypercycles=2))
    bounds = compute_bounds(timeline_flows, shaper, delays)
    kpis = annotate(compute_kpis(traces, timeline_flows), bounds, validate_traces(traces, bounds))
    for kpi in kpis:
        assert kpi.bound_pass is True
        assert kpi.bcd_us <= kpi.min_us <= kpi.mean_us <= kpi.smd_us <= kpi.wcd_us
        assert kpi.smj_us <= 100


def kpi(flow_id, gid, smd, smj=0.0, sw_num=1):
    return FlowKpi(flow_id=flow_id, gid=gid, sw_num=sw_num, period_us=400, smd_us=smd, smj_us=smj, delivered=1)


def test_compare_identical_sets():
    kpis = [kpi(1, 1, 60.0), kpi(2, 2, 70.0)]
    table = compare_shapers([("cqf", kpis), ("again", kpis)])
    assert table.labels == ["cqf", "again"]
    assert all(row.delta_smd_us["again"] == 0 for row in table.rows)


def test_compare_sorts_by_gid_then_id():
    a = [kpi(1, 3, 150.0), kpi(2, 1, 40.0), kpi(3, 1, 30.0), kpi(4, 2, 80.0)]
    b = [kpi(1, 3, 160.0, 20.0), kpi(2, 1, 60.0), kpi(3, 1, 30.0), kpi(4, 2, 80.0)]
    table = compare_shapers([("cqf", a), ("mcqf", b)])
    assert [r.flow_id for r in table.rows] == [2, 3, 4, 1]
    assert table.rows[0].delta_smd_us["mcqf"] == pytest.approx(20)
    assert [g.gid for g in table.groups] == [1, 2, 3]
    assert table.groups[0].smd_us == {"cqf": 40.0, "mcqf": 60.0}
    assert table.groups[2].smj_us["mcqf"] == 20.0


def test_compare_rejects_mismatched_sets():
    with pytest.raises(MismatchedFlowSets):
        compare_shapers([("a", [kpi(1, 1, 10.0)]), ("b", [kpi(2, 1, 10.0)])])


def test_compare_handles_starved_flows():
    a = [FlowKpi(flow_id=1, sw_num=1, period_us=400)]
    table = compare_shapers([("a", a), ("b", [kpi(1, None, 10.0)])])
    assert table.rows[0].delta_smd_us == {"a": None, "b": None}


# --- export

def test_empty_kpi_list_exports_header_only(tmp_path):
    path = export([], tmp_path / "kpis.csv", "csv")
    lines = path.read_text().splitlines()
    assert lines == [f"# {DELAY_CONVENTION}", ",".join(KPI_COLUMNS)]


def test_csv_round_trip(tmp_path, flows):
    kpis = compute_kpis(traces_with([90.125, 100.5, 95.875]), flows)
    path = export(kpis, tmp_path / "out" / "kpis.csv")
    assert load_kpis(path) == kpis


def test_exports_are_byte_identical(tmp_path, flows):
    kpis = compute_kpis(traces_with([90, 100, 95]), flows)
    for fmt in ("csv", "yaml", "json"):
        a = export(kpis, tmp_path / f"a.{fmt}", fmt)
        b = export(kpis, tmp_path / f"b.{fmt}", fmt)
        assert a.read_bytes() == b.read_bytes()


def test_structured_exports_carry_convention(tmp_path, flows):
    kpis = compute_kpis(traces_with([90, 100]), flows)
    document = json.loads(export(kpis, tmp_path / "k.json", "json").read_text())
    assert document["convention"] == DELAY_CONVENTION
    assert document["rows"][0]["smd_us"] == 100

    text = export(kpis, tmp_path / "k.yaml", "yaml").read_text()
    assert text.startswith(f"# {DELAY_CONVENTION}")
    assert yaml.safe_load(text)["rows"][0]["qid"] == "normal"


def test_export_comparison_and_reports(tmp_path, one_switch, timeline_flows, delays):
    table = compare_shapers([("cqf", [kpi(1, 1, 60.0)]), ("3q", [kpi(1, 1, 110.0)])])
    header = export(table, tmp_path / "cmp.csv").read_text().splitlines()[1]
    assert header == "flow_id,gid,sw_num,smd_us[cqf],smj_us[cqf],delta_smd_us[cqf],smd_us[3q],smj_us[3q],delta_smd_us[3q]"

    shaper = default_shaper_config(ShaperKind.CQF)
    bounds = compute_bounds(timeline_flows, shaper, delays)
    rows = export(bounds, tmp_path / "bounds.csv").read_text().splitlines()
    assert rows[1].startswith("flow_id,gid,sw_num,slot_us")
    assert rows[2].endswith("1.200,1.200,101.200")


def test_unknown_format(tmp_path):
    with pytest.raises(ExportError):
        export([], tmp_path / "kpis.xml", "xml")


def test_load_rejects_foreign_csv(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ParseError):
        load_kpis(path)
    with pytest.raises(ParseError):
        load_kpis(tmp_path / "missing.csv")
