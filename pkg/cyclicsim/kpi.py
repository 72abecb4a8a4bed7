"""
Per-flow KPIs, shaper comparisons and result export.

SMD is the largest measured end-to-end delay of a flow, SMJ the spread
between its largest and smallest. Delays run from emission to delivery and
are reported in microseconds; dropped and warmup frames are excluded.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from cyclicsim.analysis import DelayBounds, FeasibilityReport, FlowValidation, ValidationReport
from cyclicsim.documents import write_document
from cyclicsim.engine import TraceSet
from cyclicsim.errors import ExportError, MismatchedFlowSets, ParseError
from cyclicsim.traffic import FlowSet, Qid
from cyclicsim.units import ns_to_us, us_to_ns

logger = logging.getLogger(__name__)

DELAY_CONVENTION = "delay = delivery - emission (offset-exclusive), microseconds"

KPI_COLUMNS = [
    "flow_id", "gid", "qid", "sw_num", "period_us", "smd_us", "smj_us", "mean_us", "min_us",
    "wcd_us", "bcd_us", "delivered", "dropped", "deadline_misses", "bound_pass",
]
FORMATS = ("csv", "yaml", "json")


class FlowKpi(BaseModel):
    flow_id: int
    gid: Optional[int] = None
    qid: Optional[Qid] = None
    sw_num: int
    period_us: int
    smd_us: Optional[float] = None
    smj_us: Optional[float] = None
    mean_us: Optional[float] = None
    min_us: Optional[float] = None
    wcd_us: Optional[float] = None
    bcd_us: Optional[float] = None
    delivered: int = Field(default=0, ge=0)
    dropped: int = Field(default=0, ge=0)
    deadline_misses: int = Field(default=0, ge=0)
    bound_pass: Optional[bool] = None

    @property
    def starved(self) -> bool:
        """No frame of this flow was delivered in the measured window."""
        return self.delivered == 0


def compute_kpis(traces: TraceSet, flows: FlowSet) -> List[FlowKpi]:
    """
    Fold a trace set into one FlowKpi per flow, in flow-id order.

    Args:
        traces: Output of a run
        flows: The flow set that was simulated

    Returns:
        KPIs; flows with no deliveries carry None delay columns
    """
    result = []
    for flow in sorted(flows.flows, key=lambda f: f.id):
        delays = np.array([f.delay_ns for f in traces.measured(flow.id)], dtype=np.int64)
        kpi = FlowKpi(
            flow_id=flow.id, gid=flow.gid, qid=flow.qid, sw_num=flow.sw_num, period_us=flow.period_us,
            delivered=int(delays.size), dropped=traces.dropped(flow.id),
        )
        if delays.size:
            hi, lo = int(delays.max()), int(delays.min())
            kpi = kpi.model_copy(update={
                "smd_us": ns_to_us(hi),
                "smj_us": ns_to_us(hi - lo),
                "min_us": ns_to_us(lo),
                "mean_us": ns_to_us(int(delays.sum()) / delays.size),
                "deadline_misses": int(np.count_nonzero(delays > us_to_ns(flow.deadline_us))),
            })
        else:
            logger.warning(f"Flow {flow.id} delivered no frames in the measured window")
        result.append(kpi)
    return result


def annotate(kpis: Iterable[FlowKpi], bounds: Iterable[DelayBounds],
             validation: Optional[ValidationReport] = None) -> List[FlowKpi]:
    """Fill the wcd/bcd columns and, given a validation report, bound_pass."""
    bounds_by_id = {b.flow_id: b for b in bounds}
    checked = validation.by_id() if validation else {}
    result = []
    for kpi in kpis:
        updates: Dict[str, Any] = {}
        if kpi.flow_id in bounds_by_id:
            updates["wcd_us"] = bounds_by_id[kpi.flow_id].wcd_us
            updates["bcd_us"] = bounds_by_id[kpi.flow_id].bcd_us
        if kpi.flow_id in checked:
            updates["bound_pass"] = checked[kpi.flow_id].passed
        result.append(kpi.model_copy(update=updates))
    return result


class ComparisonRow(BaseModel):
    flow_id: int
    gid: Optional[int] = None
    sw_num: int
    smd_us: Dict[str, Optional[float]]
    smj_us: Dict[str, Optional[float]]
    delta_smd_us: Dict[str, Optional[float]]


class GroupSummary(BaseModel):
    """Worst SMD and SMJ of a group's flows under each shaper."""
    gid: Optional[int] = None
    flows: int
    smd_us: Dict[str, Optional[float]]
    smj_us: Dict[str, Optional[float]]


class ComparisonTable(BaseModel):
    labels: List[str]
    rows: List[ComparisonRow] = []
    groups: List[GroupSummary] = []


def _gid_key(gid: Optional[int]) -> int:
    return gid if gid is not None else 0


def _worst(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return max(present) if present else None


def compare_shapers(kpi_sets: Sequence[Tuple[str, Sequence[FlowKpi]]]) -> ComparisonTable:
    """
    Side-by-side SMD/SMJ per flow and per group, sorted by gid then flow id.

    Deltas are taken against the first labelled set.

    Raises:
        MismatchedFlowSets: The sets do not cover the same flow ids
    """
    labels = [label for label, _ in kpi_sets]
    if not kpi_sets:
        return ComparisonTable(labels=[])
    indexed = [(label, {k.flow_id: k for k in kpis}) for label, kpis in kpi_sets]
    reference_label, reference = indexed[0]
    for label, by_id in indexed[1:]:
        if set(by_id) != set(reference):
            raise MismatchedFlowSets(f"flow ids of '{label}' differ from '{reference_label}'")

    rows = []
    for flow_id, ref in reference.items():
        smd = {label: by_id[flow_id].smd_us for label, by_id in indexed}
        smj = {label: by_id[flow_id].smj_us for label, by_id in indexed}
        delta = {
            label: (None if smd[label] is None or ref.smd_us is None else round(smd[label] - ref.smd_us, 3))
            for label in labels
        }
        rows.append(ComparisonRow(flow_id=flow_id, gid=ref.gid, sw_num=ref.sw_num,
                                  smd_us=smd, smj_us=smj, delta_smd_us=delta))
    rows.sort(key=lambda r: (_gid_key(r.gid), r.flow_id))

    groups = []
    for gid in sorted({r.gid for r in rows}, key=_gid_key):
        members = [r for r in rows if r.gid == gid]
        groups.append(GroupSummary(
            gid=gid, flows=len(members),
            smd_us={label: _worst(r.smd_us[label] for r in members) for label in labels},
            smj_us={label: _worst(r.smj_us[label] for r in members) for label in labels},
        ))
    return ComparisonTable(labels=labels, rows=rows, groups=groups)


# --- export

Exportable = Union[Sequence[FlowKpi], Sequence[DelayBounds], ComparisonTable, ValidationReport, FeasibilityReport]


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.3f}"
    if isinstance(value, Qid):
        return value.value
    return str(value)


def _table(obj: Exportable) -> Tuple[List[str], List[List[Any]]]:
    if isinstance(obj, ComparisonTable):
        columns = ["flow_id", "gid", "sw_num"]
        for label in obj.labels:
            columns += [f"smd_us[{label}]", f"smj_us[{label}]", f"delta_smd_us[{label}]"]
        rows = []
        for r in obj.rows:
            row = [r.flow_id, r.gid, r.sw_num]
            for label in obj.labels:
                row += [r.smd_us[label], r.smj_us[label], r.delta_smd_us[label]]
            rows.append(row)
        return columns, rows
    if isinstance(obj, ValidationReport):
        columns = list(FlowValidation.model_fields)
        return columns, [[getattr(f, c) for c in columns] for f in obj.flows]
    if isinstance(obj, FeasibilityReport):
        columns = ["kind", "node", "peer", "gid", "slot", "value", "limit"]
        rows: List[List[Any]] = []
        for v in obj.offset_violations:
            rows.append(["offset", "", "", "", "", v.phi_us, v.period_us])
        for v in obj.queue_violations:
            rows.append(["queue", v.node, v.peer, v.gid, v.slot, v.occupancy, v.q_len])
        for v in obj.bandwidth_violations:
            rows.append(["bandwidth", v.node, v.peer, v.gid, v.slot, v.demand_ns, v.slot_ns])
        for v in obj.alignment_violations:
            rows.append(["alignment", v.node, v.peer, v.gid, v.slot, v.latest_arrival_ns, v.slot_ns])
        return columns, rows

    items = list(obj)
    if items and isinstance(items[0], DelayBounds):
        columns = ["flow_id", "gid", "sw_num", "slot_us", "d_queue_us", "xi_us", "bcd_us", "wcd_us"]
    else:
        columns = KPI_COLUMNS
    return columns, [[getattr(item, c) for c in columns] for item in items]


def _document(obj: Exportable) -> Any:
    if isinstance(obj, BaseModel):
        data = obj.model_dump(mode="json")
        if isinstance(obj, FeasibilityReport):
            data["verdict"] = obj.verdict
        return data
    return {"rows": [item.model_dump(mode="json") for item in obj]}


def export(obj: Exportable, path: Union[str, Path], fmt: str = "csv") -> Path:
    """
    Write KPIs, bounds, a comparison table or a report to disk.

    Args:
        obj: What to write
        path: Target file; parent directories are created
        fmt: csv, yaml or json

    Returns:
        The written path

    Raises:
        ExportError: Unknown format or the file cannot be written
    """
    if fmt not in FORMATS:
        raise ExportError(f"unknown format '{fmt}', expected one of {FORMATS}")
    path = Path(path)

    if fmt == "yaml":
        return write_document(_document(obj), path, header=DELAY_CONVENTION)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            if fmt == "json":
                json.dump({"convention": DELAY_CONVENTION, **_document(obj)}, f, indent=2, sort_keys=True)
                f.write("\n")
            else:
                columns, rows = _table(obj)
                f.write(f"# {DELAY_CONVENTION}\n")
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(columns)
                for row in rows:
                    writer.writerow([_cell(v) for v in row])
    except OSError as e:
        raise ExportError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {path}")
    return path


def _parse_cell(column: str, text: str) -> Any:
    if text == "":
        return None
    if column == "bound_pass":
        return text == "true"
    if column == "qid":
        return Qid(text)
    if column.endswith("_us") and column != "period_us":
        return float(text)
    return int(text)


def load_kpis(path: Union[str, Path]) -> List[FlowKpi]:
    """
    Read a KPI CSV written by export.

    Raises:
        ParseError: Missing file, wrong header or malformed cell
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as f:
            lines = [line for line in f if not line.startswith("#")]
    except OSError as e:
        raise ParseError(f"cannot read file: {e.strerror}", path=str(path)) from e

    reader = csv.DictReader(lines)
    if reader.fieldnames != KPI_COLUMNS:
        raise ParseError(f"unexpected columns {reader.fieldnames}", line=2, path=str(path))
    kpis = []
    for index, row in enumerate(reader, start=3):
        try:
            values = {column: _parse_cell(column, row[column]) for column in KPI_COLUMNS}
            kpis.append(FlowKpi(**{k: v for k, v in values.items() if v is not None}))
        except ValueError as e:
            raise ParseError(str(e), line=index, path=str(path)) from e
    return kpis
