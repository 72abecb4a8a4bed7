import json
import textwrap

import pytest
import yaml

from cyclicsim.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from cyclicsim.kpi import load_kpis
from cyclicsim.scenario import bundled_scenario_path
from cyclicsim.topology import load_topology

ONE_SWITCH = str(bundled_scenario_path("one_switch"))


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("CYCLICSIM_OUT_DIR", "CYCLICSIM_WORKERS", "CYCLICSIM_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


def test_generate_ring(tmp_path):
    out = tmp_path / "ring.topo"
    assert main(["generate", "ring", "--switches", "4", "--es-per-switch", "1", "--out", str(out)]) == EXIT_OK
    graph = load_topology(out)
    assert len(graph.nodes) == 8 and len(graph.links) == 8


def test_generate_rejects_bad_parameters():
    assert main(["generate", "ring", "--switches", "2"]) == EXIT_FAILURE


def test_generate_flows_is_deterministic(tmp_path):
    args = ["generate", "flows", "--topology", "one_switch", "--count", "5", "--seed", "2"]
    assert main(args + ["--out", str(tmp_path / "a.yaml")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b.yaml")]) == EXIT_OK
    assert (tmp_path / "a.yaml").read_bytes() == (tmp_path / "b.yaml").read_bytes()
    flows = yaml.safe_load((tmp_path / "a.yaml").read_text())["flows"]
    assert [f["id"] for f in flows] == [1, 2, 3, 4, 5]
    assert all(f["route"][0] == f["src"] and f["route"][-1] == f["dst"] for f in flows)


def test_generate_flows_defaults_to_one_switch(tmp_path):
    out = tmp_path / "flows.yaml"
    assert main(["generate", "flows", "--count", "20", "--seed", "1", "--out", str(out)]) == EXIT_OK
    flows = yaml.safe_load(out.read_text())["flows"]
    assert len(flows) == 20
    assert all({f["src"], f["dst"]} == {1, 2} and f["route"] == [f["src"], 0, f["dst"]] for f in flows)


def test_validate_and_analyze(tmp_path):
    assert main(["validate", ONE_SWITCH]) == EXIT_OK
    assert main(["analyze", ONE_SWITCH, "--out-dir", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "one_switch" / "bounds.csv").is_file()
    assert (tmp_path / "one_switch" / "feasibility.csv").read_text().splitlines()[1].startswith("kind,node")


def test_simulate_writes_kpis_and_is_deterministic(tmp_path):
    args = ["simulate", ONE_SWITCH, "--hypercycles", "2", "--out-dir"]
    assert main(args + [str(tmp_path / "a")]) == EXIT_OK
    assert main(args + [str(tmp_path / "b")]) == EXIT_OK
    a = tmp_path / "a" / "one_switch" / "kpis_cqf.csv"
    assert a.read_bytes() == (tmp_path / "b" / "one_switch" / "kpis_cqf.csv").read_bytes()
    kpis = load_kpis(a)
    assert len(kpis) == 20
    assert all(k.bound_pass for k in kpis)


def test_simulate_with_shaper_override_and_trace(tmp_path):
    args = ["simulate", ONE_SWITCH, "--shaper", "mcqf", "--hypercycles", "1", "--trace",
            "--format", "json", "--out-dir", str(tmp_path)]
    assert main(args) == EXIT_OK
    out = tmp_path / "one_switch"
    trace = json.loads((out / "trace_mcqf.json").read_text())
    assert trace["drops"] == []
    assert json.loads((out / "validation_mcqf.json").read_text())["flows"]


def test_simulate_fails_on_drops(tmp_path):
    scenario = tmp_path / "tight.yaml"
    scenario.write_text(textwrap.dedent("""\
        topology: {bundled: one_switch}
        flows:
        - {id: 1, src: 1, dst: 2, period_us: 400, size_b: 1500}
        shaper: {kind: cqf, slots_us: [5]}
        sim: {hypercycles: 1}
        """))
    assert main(["simulate", str(scenario), "--out-dir", str(tmp_path)]) == EXIT_FAILURE
    assert main(["analyze", str(scenario), "--out-dir", str(tmp_path)]) == EXIT_FAILURE


def test_compare(tmp_path):
    args = ["compare", ONE_SWITCH, "--shapers", "cqf,3q", "--hypercycles", "1", "--out-dir", str(tmp_path)]
    assert main(args) == EXIT_OK
    header = (tmp_path / "one_switch" / "comparison.csv").read_text().splitlines()[1]
    assert "smd_us[cqf]" in header and "delta_smd_us[3q]" in header


def test_parse_errors_exit_two(tmp_path):
    broken = tmp_path / "broken.yaml"
    broken.write_text("topology: [unclosed\n")
    assert main(["validate", str(broken)]) == EXIT_USAGE
    assert main(["simulate", str(tmp_path / "missing.yaml")]) == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["simulate", ONE_SWITCH, "--shaper", "tas"],
    ["generate", "ring", "--switches", "four"],
])
def test_usage_errors_exit_two(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE
