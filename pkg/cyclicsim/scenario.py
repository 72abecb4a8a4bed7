"""
Scenario files: one YAML document describing topology, flows, schedule,
shaper, delays and run parameters.

    name: one_switch
    seed: 1
    topology: {bundled: one_switch}      # or file / generator / inline
    flows: [{id: 1, src: 1, dst: 2, period_us: 400, size_b: 100}]
    shaper: {kind: cqf, slots_us: [50]}
    delays: {processing_us: 1.0, sync_error_bound_us: 0}
    sim: {hypercycles: 10, warmup_hypercycles: 0}

Relative file references resolve against the scenario file's directory.
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from cyclicsim.documents import parse_document, read_document
from cyclicsim.engine import DEFAULT_FRAME_OVERHEAD_B, DEFAULT_PROCESSING_US, DelayParams, SimConfig, validate_inputs
from cyclicsim.errors import ValidationError
from cyclicsim.shaper import GroupConfig, QueueCapacity, ShaperConfig, ShaperKind, default_shaper_config
from cyclicsim.topology import (
    DATA_DIR,
    DEFAULT_PROP_DELAY_US,
    DEFAULT_RATE_BPS,
    LinkParams,
    NetworkGraph,
    TopologyDocument,
    bundled_topology_path,
    generate_barabasi_albert,
    generate_erdos_renyi,
    generate_one_switch,
    generate_random_regular,
    generate_ring,
    load_topology,
    route_from_path,
    shortest_path,
)
from cyclicsim.traffic import (
    DEFAULT_PERIODS_US,
    MAX_PAYLOAD_B,
    MIN_PAYLOAD_B,
    Flow,
    FlowSet,
    Qid,
    ScheduleEntry,
    apply_schedule,
    generate_flows,
    with_shaper_defaults,
)

logger = logging.getLogger(__name__)

GeneratorKind = Literal["one_switch", "ring", "erg", "rrg", "bag"]


class GeneratorSpec(BaseModel):
    """Parameters of a synthetic topology."""
    model_config = ConfigDict(extra="forbid")

    kind: GeneratorKind
    switches: int = Field(default=1, ge=1)
    end_stations: Optional[int] = None
    es_per_switch: int = Field(default=1, ge=1)
    p: Optional[float] = None
    degree: Optional[int] = None
    m: Optional[int] = None
    seed: Optional[int] = None
    rate_bps: int = Field(default=DEFAULT_RATE_BPS, gt=0)
    prop_delay_us: float = Field(default=DEFAULT_PROP_DELAY_US, ge=0)

    def build(self, default_seed: int = 0) -> NetworkGraph:
        seed = self.seed if self.seed is not None else default_seed
        params = LinkParams(rate_bps=self.rate_bps, prop_delay_us=self.prop_delay_us)
        if self.kind == "one_switch":
            n_es = self.end_stations if self.end_stations is not None else self.es_per_switch
            return generate_one_switch(n_es, params)
        if self.kind == "ring":
            return generate_ring(self.switches, self.es_per_switch, params)
        if self.kind == "erg":
            return generate_erdos_renyi(self.switches, self.p if self.p is not None else 0.5,
                                        self.es_per_switch, seed, params)
        if self.kind == "rrg":
            return generate_random_regular(self.switches, self.degree if self.degree is not None else 3,
                                           self.es_per_switch, seed, params)
        return generate_barabasi_albert(self.switches, self.m if self.m is not None else 2,
                                        self.es_per_switch, seed, params)


class _TopologySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    file: Optional[str] = None
    bundled: Optional[str] = None
    generator: Optional[GeneratorSpec] = None
    inline: Optional[TopologyDocument] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "_TopologySection":
        given = [k for k in ("file", "bundled", "generator", "inline") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"topology needs exactly one of file, bundled, generator, inline (got {given or 'none'})")
        return self


class _FlowEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    src: int
    dst: int
    period_us: int = Field(gt=0)
    size_b: int = Field(gt=0)
    deadline_us: Optional[float] = Field(default=None, gt=0)
    phi_us: float = 0.0
    gid: Optional[int] = Field(default=None, ge=1)
    qid: Optional[Qid] = None
    route: Optional[List[int]] = None


class _FlowGeneratorSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(ge=0)
    periods_us: List[int] = list(DEFAULT_PERIODS_US)
    payload_b: Tuple[int, int] = (MIN_PAYLOAD_B, MAX_PAYLOAD_B)
    gid_weights: Optional[Dict[int, float]] = None
    qid_weights: Optional[Dict[Qid, float]] = None
    seed: Optional[int] = None


class _ShaperSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ShaperKind = ShaperKind.CQF
    slots_us: Optional[List[float]] = None
    groups: Optional[List[GroupConfig]] = None
    queue_capacity: QueueCapacity = QueueCapacity()

    def to_config(self) -> ShaperConfig:
        if self.groups:
            return ShaperConfig(kind=self.kind, groups=tuple(self.groups), queue_capacity=self.queue_capacity)
        return default_shaper_config(self.kind, self.slots_us, self.queue_capacity)


class _DelaySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    processing_us: float = Field(default=DEFAULT_PROCESSING_US, ge=0)
    sync_error_bound_us: float = Field(default=0.0, ge=0)


class _SimSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hypercycles: int = Field(default=10, ge=1)
    warmup_hypercycles: int = Field(default=0, ge=0)
    frame_overhead_b: int = Field(default=DEFAULT_FRAME_OVERHEAD_B, ge=0)


class _OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: Optional[str] = None
    format: Optional[Literal["csv", "yaml", "json"]] = None


class ScenarioDocument(BaseModel):
    """Schema of a scenario file."""
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    seed: int = 0
    topology: _TopologySection
    flows: Optional[List[_FlowEntry]] = None
    flow_generator: Optional[_FlowGeneratorSection] = None
    schedule: List[ScheduleEntry] = []
    shaper: _ShaperSection = _ShaperSection()
    delays: _DelaySection = _DelaySection()
    sim: _SimSection = _SimSection()
    output: _OutputSection = _OutputSection()

    @model_validator(mode="after")
    def _one_flow_source(self) -> "ScenarioDocument":
        if (self.flows is None) == (self.flow_generator is None):
            raise ValueError("give exactly one of flows, flow_generator")
        return self


class ScenarioOverrides(BaseModel):
    """Command-line values that win over the scenario file."""

    seed: Optional[int] = None
    shaper: Optional[ShaperKind] = None
    slots_us: Optional[List[float]] = None
    hypercycles: Optional[int] = Field(default=None, ge=1)
    warmup_hypercycles: Optional[int] = Field(default=None, ge=0)
    sync_error_bound_us: Optional[float] = Field(default=None, ge=0)


@dataclass(frozen=True)
class Scenario:
    """A resolved, statically valid scenario ready to analyze or run."""
    name: str
    graph: NetworkGraph
    base_flows: FlowSet
    shaper: ShaperConfig
    delays: DelayParams
    sim: SimConfig
    out_dir: Optional[str] = None
    fmt: Optional[str] = None

    @property
    def flows(self) -> FlowSet:
        """Flow set with gid/qid defaults of this scenario's shaper filled in."""
        return with_shaper_defaults(self.base_flows, self.shaper)

    @property
    def seed(self) -> int:
        return self.sim.seed

    def with_shaper(self, kind: ShaperKind, slots_us: Optional[List[float]] = None) -> "Scenario":
        """Same topology and flows under a different shaper, at its default slots."""
        kind = ShaperKind(kind)
        if slots_us is None and kind is self.shaper.kind:
            return self
        shaper = default_shaper_config(kind, slots_us, self.shaper.queue_capacity)
        scenario = replace(self, shaper=shaper)
        scenario.validate()
        return scenario

    def validate(self) -> None:
        validate_inputs(self.graph, self.flows, self.shaper)


def _load_graph(section: _TopologySection, base_dir: Path, seed: int) -> NetworkGraph:
    if section.file is not None:
        path = Path(section.file)
        return load_topology(path if path.is_absolute() else base_dir / path)
    if section.bundled is not None:
        return load_topology(bundled_topology_path(section.bundled))
    if section.generator is not None:
        return section.generator.build(seed)
    return section.inline.to_graph()


def _build_flows(document: ScenarioDocument, graph: NetworkGraph, seed: int) -> FlowSet:
    if document.flow_generator is not None:
        spec = document.flow_generator
        return generate_flows(
            graph, spec.count, spec.periods_us, spec.payload_b, spec.gid_weights, spec.qid_weights,
            seed=spec.seed if spec.seed is not None else seed,
        )

    flows = []
    for entry in document.flows:
        try:
            route = route_from_path(graph, entry.route) if entry.route else shortest_path(graph, entry.src, entry.dst)
            flows.append(Flow(
                id=entry.id, src=entry.src, dst=entry.dst, period_us=entry.period_us,
                deadline_us=entry.deadline_us if entry.deadline_us is not None else float(entry.period_us),
                size_b=entry.size_b, route=route, phi_us=entry.phi_us, gid=entry.gid, qid=entry.qid,
            ))
        except ValueError as e:
            raise ValidationError(f"flow {entry.id}: {e}") from e
    try:
        return FlowSet(flows=tuple(flows))
    except ValueError as e:
        raise ValidationError(str(e)) from e


def resolve_scenario(document: ScenarioDocument, base_dir: Union[str, Path] = ".",
                     overrides: Optional[ScenarioOverrides] = None, name: str = "scenario") -> Scenario:
    """
    Turn a parsed document into a validated Scenario, applying overrides.

    Raises:
        ValidationError: Any static check fails
        NoPath: A flow's endpoints are not connected
    """
    overrides = overrides or ScenarioOverrides()
    seed = overrides.seed if overrides.seed is not None else document.seed

    graph = _load_graph(document.topology, Path(base_dir), seed)
    flows = apply_schedule(_build_flows(document, graph, seed), document.schedule)

    shaper = document.shaper.to_config()
    if overrides.shaper is not None or overrides.slots_us is not None:
        kind = overrides.shaper or shaper.kind
        slots = overrides.slots_us
        if slots is None and kind is shaper.kind:
            slots = [g.slot_us for g in shaper.groups]
        shaper = default_shaper_config(kind, slots, shaper.queue_capacity)

    sync = overrides.sync_error_bound_us
    delays = DelayParams.for_graph(
        graph, processing_us=document.delays.processing_us,
        sync_error_bound_us=sync if sync is not None else document.delays.sync_error_bound_us,
    )
    try:
        sim = SimConfig(
            hypercycles=overrides.hypercycles or document.sim.hypercycles,
            warmup_hypercycles=(overrides.warmup_hypercycles if overrides.warmup_hypercycles is not None
                                else document.sim.warmup_hypercycles),
            seed=seed,
            frame_overhead_b=document.sim.frame_overhead_b,
        )
    except ValueError as e:
        raise ValidationError(str(e)) from e

    scenario = Scenario(
        name=document.name or name, graph=graph, base_flows=flows, shaper=shaper, delays=delays, sim=sim,
        out_dir=document.output.dir, fmt=document.output.format,
    )
    scenario.validate()
    logger.info(f"Scenario {scenario.name}: {len(graph.nodes)} nodes, {len(graph.links)} links, "
                f"{len(flows)} flows, shaper {shaper.kind.value}")
    return scenario


def load_scenario(path: Union[str, Path], overrides: Optional[ScenarioOverrides] = None) -> Scenario:
    """
    Read, resolve and validate a scenario file.

    Args:
        path: Scenario YAML file
        overrides: Command-line values that win over the file

    Raises:
        ParseError: Malformed document (with line number) or unreadable file
        ValidationError: The scenario fails a static check
    """
    path = Path(path)
    document = read_document(path, ScenarioDocument)
    return resolve_scenario(document, path.parent, overrides, name=path.stem)


def parse_scenario(text: str, overrides: Optional[ScenarioOverrides] = None,
                   base_dir: Union[str, Path] = ".") -> Scenario:
    document = parse_document(text, ScenarioDocument)
    return resolve_scenario(document, base_dir, overrides)


def bundled_scenario_path(name: str) -> Path:
    return DATA_DIR / f"{name}.yaml"
