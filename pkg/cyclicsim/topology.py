"""
Network graphs of end stations and switches.

Builds and validates undirected ES/SW graphs, generates the synthetic test
topologies (one switch, ring, Erdos-Renyi, random regular, Barabasi-Albert),
reads and writes topology files, and computes deterministic minimum-hop routes.

Generated graphs number the switches 0..n_sw-1 and attach end stations after
the backbone is built, round-robin by switch id, with ids starting at n_sw.
"""
import logging
import random
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field

from cyclicsim.documents import read_document, write_document
from cyclicsim.errors import (
    DanglingLinkEndpoint,
    DisconnectedGraph,
    DuplicateNodeId,
    EndStationDegreeViolation,
    GenerationFailed,
    InvalidParameter,
    NoPath,
    ValidationError,
)

logger = logging.getLogger(__name__)

DEFAULT_RATE_BPS = 1_000_000_000
DEFAULT_PROP_DELAY_US = 0.1
GENERATION_RETRY_BUDGET = 1000
DATA_DIR = Path(__file__).parent / "data"


class NodeKind(str, Enum):
    END_STATION = "EndStation"
    SWITCH = "Switch"


class Node(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int = Field(ge=0)
    kind: NodeKind
    name: str = ""

    @property
    def is_switch(self) -> bool:
        return self.kind is NodeKind.SWITCH


class LinkParams(BaseModel):
    """Rate and propagation delay applied to every link a generator creates."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    rate_bps: int = Field(default=DEFAULT_RATE_BPS, gt=0)
    prop_delay_us: float = Field(default=DEFAULT_PROP_DELAY_US, ge=0)


class Link(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    a: int = Field(ge=0)
    b: int = Field(ge=0)
    rate_bps: int = Field(default=DEFAULT_RATE_BPS, gt=0)
    prop_delay_us: float = Field(default=DEFAULT_PROP_DELAY_US, ge=0)

    @property
    def key(self) -> Tuple[int, int]:
        """Unordered endpoint pair, smaller id first."""
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


class Route(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: Tuple[int, ...]
    sw_count: int = Field(ge=1)

    @property
    def src(self) -> int:
        return self.path[0]

    @property
    def dst(self) -> int:
        return self.path[-1]

    def hops(self) -> List[Tuple[int, int]]:
        """Directed (node, next node) pairs along the path."""
        return list(zip(self.path[:-1], self.path[1:]))


class NetworkGraph:
    """Validated, immutable undirected graph. Construct through build_graph."""

    def __init__(self, nodes: Dict[int, Node], links: Dict[Tuple[int, int], Link]):
        self._nodes = dict(sorted(nodes.items()))
        self._links = dict(sorted(links.items()))
        adjacency: Dict[int, List[int]] = {node_id: [] for node_id in self._nodes}
        for a, b in self._links:
            adjacency[a].append(b)
            adjacency[b].append(a)
        self._adjacency = {node_id: tuple(sorted(peers)) for node_id, peers in adjacency.items()}

    @property
    def nodes(self) -> Dict[int, Node]:
        return dict(self._nodes)

    @property
    def links(self) -> List[Link]:
        return list(self._links.values())

    def node(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._nodes

    def neighbors(self, node_id: int) -> Tuple[int, ...]:
        """Neighbors in ascending id order."""
        return self._adjacency[node_id]

    def link(self, a: int, b: int) -> Link:
        key = (a, b) if a <= b else (b, a)
        return self._links[key]

    def has_link(self, a: int, b: int) -> bool:
        key = (a, b) if a <= b else (b, a)
        return key in self._links

    def end_stations(self) -> List[int]:
        return [n.id for n in self._nodes.values() if n.kind is NodeKind.END_STATION]

    def switches(self) -> List[int]:
        return [n.id for n in self._nodes.values() if n.kind is NodeKind.SWITCH]

    def degree(self, node_id: int) -> int:
        return len(self._adjacency[node_id])

    def backbone_links(self) -> List[Link]:
        """Links between two switches."""
        return [
            link for link in self._links.values()
            if self._nodes[link.a].is_switch and self._nodes[link.b].is_switch
        ]

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        for node in self._nodes.values():
            g.add_node(node.id, kind=node.kind.value, name=node.name)
        for link in self._links.values():
            g.add_edge(link.a, link.b, rate_bps=link.rate_bps, prop_delay_us=link.prop_delay_us)
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._links == other._links

    def __repr__(self) -> str:
        return (f"NetworkGraph(switches={len(self.switches())}, "
                f"end_stations={len(self.end_stations())}, links={len(self._links)})")


def build_graph(nodes: Iterable[Node], links: Iterable[Link]) -> NetworkGraph:
    """
    Validate nodes and links and assemble a NetworkGraph.

    Args:
        nodes: Node records with unique ids
        links: Link records between existing nodes

    Returns:
        The validated graph

    Raises:
        DuplicateNodeId, DanglingLinkEndpoint, EndStationDegreeViolation,
        DisconnectedGraph, ValidationError
    """
    node_map: Dict[int, Node] = {}
    for node in nodes:
        if node.id in node_map:
            raise DuplicateNodeId(f"node id {node.id} appears more than once")
        node_map[node.id] = node

    link_map: Dict[Tuple[int, int], Link] = {}
    for link in links:
        for endpoint in (link.a, link.b):
            if endpoint not in node_map:
                raise DanglingLinkEndpoint(f"link {link.a}-{link.b} references unknown node {endpoint}")
        if link.a == link.b:
            raise ValidationError(f"link {link.a}-{link.b} connects a node to itself")
        if link.key in link_map:
            raise ValidationError(f"more than one link between {link.key[0]} and {link.key[1]}")
        link_map[link.key] = link

    graph = NetworkGraph(node_map, link_map)

    switches = graph.switches()
    end_stations = graph.end_stations()
    if not switches:
        raise ValidationError("graph has no switch")
    if len(end_stations) < 2:
        raise ValidationError("graph needs at least two end stations to carry a flow")

    for es in end_stations:
        peers = graph.neighbors(es)
        if len(peers) != 1:
            raise EndStationDegreeViolation(f"end station {es} has degree {len(peers)}, expected 1")
        if not graph.node(peers[0]).is_switch:
            raise EndStationDegreeViolation(f"end station {es} is attached to end station {peers[0]}")

    if not nx.is_connected(graph.to_networkx()):
        raise DisconnectedGraph("graph is not connected")

    logger.debug(f"Built {graph!r}")
    return graph


def _params(link_params: Optional[LinkParams]) -> LinkParams:
    return link_params if link_params is not None else LinkParams()


def _link(a: int, b: int, params: LinkParams) -> Link:
    return Link(a=a, b=b, rate_bps=params.rate_bps, prop_delay_us=params.prop_delay_us)


def _attach_end_stations(backbone: nx.Graph, es_per_sw: int,
                         link_params: Optional[LinkParams]) -> NetworkGraph:
    """Decorate a switch backbone (nodes 0..n-1) with end stations."""
    params = _params(link_params)
    n_sw = backbone.number_of_nodes()
    nodes = [Node(id=sw, kind=NodeKind.SWITCH, name=f"SW{sw}") for sw in range(n_sw)]
    links = [_link(min(u, v), max(u, v), params) for u, v in backbone.edges()]

    for index in range(n_sw * es_per_sw):
        es_id = n_sw + index
        nodes.append(Node(id=es_id, kind=NodeKind.END_STATION, name=f"ES{es_id}"))
        links.append(_link(index % n_sw, es_id, params))

    return build_graph(nodes, links)


def generate_one_switch(n_es: int, link_params: Optional[LinkParams] = None) -> NetworkGraph:
    """Star topology: switch 0 with end stations 1..n_es."""
    if n_es < 2:
        raise InvalidParameter(f"one-switch topology needs n_es >= 2, got {n_es}")
    backbone = nx.empty_graph(1)
    return _attach_end_stations(backbone, n_es, link_params)


def generate_ring(n_sw: int, es_per_sw: int = 1,
                  link_params: Optional[LinkParams] = None) -> NetworkGraph:
    """Switches 0..n_sw-1 in a cycle, es_per_sw end stations on each."""
    if n_sw < 3:
        raise InvalidParameter(f"a ring needs at least 3 switches, got {n_sw}")
    if es_per_sw < 1:
        raise InvalidParameter(f"es_per_sw must be >= 1, got {es_per_sw}")
    return _attach_end_stations(nx.cycle_graph(n_sw), es_per_sw, link_params)


def _draw_connected(draw, description: str) -> nx.Graph:
    for attempt in range(GENERATION_RETRY_BUDGET):
        backbone = draw()
        if nx.is_connected(backbone):
            if attempt:
                logger.info(f"{description}: connected backbone after {attempt + 1} draws")
            return backbone
    raise GenerationFailed(f"{description}: no connected backbone in {GENERATION_RETRY_BUDGET} draws")


def generate_erdos_renyi(n_sw: int, p: float, es_per_sw: int = 1, seed: int = 0,
                         link_params: Optional[LinkParams] = None) -> NetworkGraph:
    """
    Erdos-Renyi G(n_sw, p) backbone, redrawn until connected.

    Successive draws consume one random stream seeded with `seed`, so the
    result is a pure function of the parameters.
    """
    if n_sw < 1:
        raise InvalidParameter(f"n_sw must be >= 1, got {n_sw}")
    if not 0 < p <= 1:
        raise InvalidParameter(f"p must be in (0, 1], got {p}")
    if es_per_sw < 1:
        raise InvalidParameter(f"es_per_sw must be >= 1, got {es_per_sw}")

    rng = random.Random(seed)
    backbone = _draw_connected(lambda: nx.gnp_random_graph(n_sw, p, seed=rng),
                               f"ERG(n={n_sw}, p={p}, seed={seed})")
    return _attach_end_stations(backbone, es_per_sw, link_params)


def generate_random_regular(n_sw: int, degree: int, es_per_sw: int = 1, seed: int = 0,
                            link_params: Optional[LinkParams] = None) -> NetworkGraph:
    """Random `degree`-regular backbone, redrawn until connected."""
    if degree < 1 or degree >= n_sw:
        raise InvalidParameter(f"degree must satisfy 1 <= degree < n_sw, got degree={degree}, n_sw={n_sw}")
    if (n_sw * degree) % 2:
        raise InvalidParameter(f"n_sw * degree must be even, got {n_sw} * {degree}")
    if es_per_sw < 1:
        raise InvalidParameter(f"es_per_sw must be >= 1, got {es_per_sw}")

    rng = random.Random(seed)
    backbone = _draw_connected(lambda: nx.random_regular_graph(degree, n_sw, seed=rng),
                               f"RRG(n={n_sw}, d={degree}, seed={seed})")
    return _attach_end_stations(backbone, es_per_sw, link_params)


def generate_barabasi_albert(n_sw: int, m_attach: int, es_per_sw: int = 1, seed: int = 0,
                             link_params: Optional[LinkParams] = None) -> NetworkGraph:
    """
    Preferential-attachment backbone grown from an m_attach-node clique.

    Every added switch attaches to m_attach distinct existing switches, so the
    backbone has m_attach*(n_sw - m_attach) + m_attach*(m_attach - 1)/2 links.
    """
    if not 1 <= m_attach < n_sw:
        raise InvalidParameter(f"m_attach must satisfy 1 <= m_attach < n_sw, got {m_attach}, n_sw={n_sw}")
    if es_per_sw < 1:
        raise InvalidParameter(f"es_per_sw must be >= 1, got {es_per_sw}")

    # A single-node clique has no edge to attach to preferentially; its first
    # attachment is forced, which is the same as starting from a 2-clique.
    seed_clique = nx.complete_graph(max(m_attach, 2))
    backbone = nx.barabasi_albert_graph(n_sw, m_attach, seed=seed, initial_graph=seed_clique)
    return _attach_end_stations(backbone, es_per_sw, link_params)


# Topology files

class _NodeEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int = Field(ge=0)
    kind: NodeKind
    name: str = ""


class _LinkEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: int = Field(ge=0)
    b: int = Field(ge=0)
    rate_bps: int = Field(default=DEFAULT_RATE_BPS, gt=0)
    prop_delay_us: float = Field(default=DEFAULT_PROP_DELAY_US, ge=0)


class TopologyDocument(BaseModel):
    """Schema of a topology file (also embedded inline in scenarios)."""
    model_config = ConfigDict(extra="forbid")

    nodes: List[_NodeEntry]
    links: List[_LinkEntry]

    def to_graph(self) -> NetworkGraph:
        return build_graph(
            [Node(id=n.id, kind=n.kind, name=n.name) for n in self.nodes],
            [Link(a=l.a, b=l.b, rate_bps=l.rate_bps, prop_delay_us=l.prop_delay_us) for l in self.links],
        )

    @classmethod
    def from_graph(cls, graph: NetworkGraph) -> "TopologyDocument":
        return cls(
            nodes=[_NodeEntry(id=n.id, kind=n.kind, name=n.name) for n in graph.nodes.values()],
            links=[_LinkEntry(a=l.a, b=l.b, rate_bps=l.rate_bps, prop_delay_us=l.prop_delay_us)
                   for l in graph.links],
        )


def load_topology(path: Union[str, Path]) -> NetworkGraph:
    """
    Load and validate a topology file.

    Raises:
        ParseError: Malformed document (with line number)
        ValidationError subclasses: as build_graph
    """
    document = read_document(path, TopologyDocument)
    graph = document.to_graph()
    logger.info(f"Loaded topology {path}: {graph!r}")
    return graph


def save_topology(graph: NetworkGraph, path: Union[str, Path], header: str = "") -> Path:
    document = TopologyDocument.from_graph(graph)
    return write_document(document.model_dump(mode="json"), path, header=header)


def bundled_topology_path(name: str) -> Path:
    """Path of a topology file shipped in cyclicsim/data (e.g. 'orion')."""
    path = DATA_DIR / f"{name}.topo"
    if not path.is_file():
        raise InvalidParameter(f"no bundled topology named {name!r}")
    return path


# Routing

def route_from_path(graph: NetworkGraph, path: Iterable[int]) -> Route:
    """Validate an explicit node-id path and turn it into a Route."""
    path = tuple(path)
    if len(path) < 3:
        raise ValidationError(f"route {list(path)} must contain at least one switch")
    for node_id in path:
        if not graph.has_node(node_id):
            raise ValidationError(f"route {list(path)} references unknown node {node_id}")
    if graph.node(path[0]).is_switch or graph.node(path[-1]).is_switch:
        raise ValidationError(f"route {list(path)} must start and end at end stations")
    for node_id in path[1:-1]:
        if not graph.node(node_id).is_switch:
            raise ValidationError(f"route {list(path)} passes through end station {node_id}")
    for a, b in zip(path[:-1], path[1:]):
        if not graph.has_link(a, b):
            raise ValidationError(f"route {list(path)} uses missing link {a}-{b}")
    return Route(path=path, sw_count=len(path) - 2)


def shortest_path(graph: NetworkGraph, src: int, dst: int) -> Route:
    """
    Minimum-hop route between two end stations.

    Breadth-first search expanding neighbors in ascending id order; the first
    discovery of a node fixes its parent, so ties go to the lowest-id neighbor.
    End stations are leaves, so only switches relay.

    Raises:
        InvalidParameter: src == dst or an endpoint is not an end station
        NoPath: dst unreachable
    """
    if src == dst:
        raise InvalidParameter(f"src and dst must differ, got {src}")
    for endpoint in (src, dst):
        if not graph.has_node(endpoint) or graph.node(endpoint).is_switch:
            raise InvalidParameter(f"{endpoint} is not an end station of the graph")

    parents = dict(nx.bfs_predecessors(graph.to_networkx(), src, sort_neighbors=sorted))
    if dst not in parents:
        raise NoPath(f"no path from {src} to {dst}")

    path = [dst]
    while path[-1] != src:
        path.append(parents[path[-1]])
    path.reverse()

    sw_count = sum(1 for node_id in path if graph.node(node_id).is_switch)
    return Route(path=tuple(path), sw_count=sw_count)
