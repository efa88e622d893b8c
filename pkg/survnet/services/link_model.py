"""Raw grid types, validation, parallel-line merging and the links-only representation.

A raw grid is a set of generators, substations and loads joined by lines. The
links-only form keeps the substations as junctions and turns everything else
into three kinds of link elements:

* ``VT`` links hang a generator off a junction (positive weight),
* ``VB`` links hang a load off a junction (negative weight),
* ``H`` links join two junctions (no weight).

Junctions never fail; only link elements do. The element order of a
``LinkNetwork`` fixes the bit position of every element in a fault bitmask.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from survnet.errors import LinkModelError, NetworkValidationError

logger = logging.getLogger("survnet.link_model")


class NodeKind(str, Enum):
    SOURCE = "gen"
    INTERCONNECTION = "sub"
    SINK = "load"
    INTERCONNECTION_WITH_SINK = "subload"

    @property
    def is_junction(self) -> bool:
        return self in (NodeKind.INTERCONNECTION, NodeKind.INTERCONNECTION_WITH_SINK)

    @property
    def is_sink_bearing(self) -> bool:
        return self in (NodeKind.SINK, NodeKind.INTERCONNECTION_WITH_SINK)


class LinkKind(str, Enum):
    VT = "VT"
    VB = "VB"
    H = "H"


# Kind order used for element bit positions.
KIND_ORDER: Dict[LinkKind, int] = {LinkKind.VB: 0, LinkKind.VT: 1, LinkKind.H: 2}


def node_ref(node_id: int) -> str:
    return f"n{node_id}"


def edge_ref(edge_id: str) -> str:
    return f"e{edge_id}"


def edge_sort_key(edge_id: str) -> Tuple[int, int, str]:
    if edge_id.isdigit():
        return (0, int(edge_id), "")
    return (1, 0, edge_id)


@dataclass(frozen=True)
class RawNode:
    id: int
    kind: NodeKind
    capacity: Optional[float] = None
    demand: Optional[float] = None


@dataclass(frozen=True)
class RawEdge:
    id: str
    endpoints: Tuple[int, int]
    multiplicity: int = 1
    provenance: FrozenSet[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.provenance:
            object.__setattr__(self, "provenance", frozenset({edge_ref(self.id)}))

    @property
    def pair(self) -> Tuple[int, int]:
        a, b = self.endpoints
        return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class RawNetwork:
    name: str
    nodes: Tuple[RawNode, ...] = ()
    edges: Tuple[RawEdge, ...] = ()


@dataclass(frozen=True)
class ValidatedRawNetwork:
    """A RawNetwork whose invariants hold, with nodes in ascending id order."""

    name: str
    nodes: Tuple[RawNode, ...]
    edges: Tuple[RawEdge, ...]
    node_ids: Tuple[int, ...]
    index: Mapping[int, int]
    parallel_merged: bool = False

    def node(self, node_id: int) -> RawNode:
        try:
            return self.nodes[self.index[node_id]]
        except KeyError:
            raise NetworkValidationError([f"unknown node {node_id}"], offending_ids=[node_id]) from None

    def has_node(self, node_id: int) -> bool:
        return node_id in self.index

    def sources(self) -> List[RawNode]:
        return [n for n in self.nodes if n.kind is NodeKind.SOURCE]

    def sinks(self) -> List[RawNode]:
        return [n for n in self.nodes if n.kind.is_sink_bearing]

    def incident_edges(self) -> Dict[int, List[RawEdge]]:
        incident: Dict[int, List[RawEdge]] = defaultdict(list)
        for edge in self.edges:
            for endpoint in edge.endpoints:
                incident[endpoint].append(edge)
        return incident

    def to_raw(self) -> RawNetwork:
        return RawNetwork(name=self.name, nodes=self.nodes, edges=self.edges)

    def subgrid(self, node_ids: Iterable[int], *, name: Optional[str] = None) -> "ValidatedRawNetwork":
        """Induced sub-grid over ``node_ids``; edges with an endpoint outside are dropped."""
        keep = set(node_ids)
        nodes = tuple(n for n in self.nodes if n.id in keep)
        edges = tuple(e for e in self.edges if e.endpoints[0] in keep and e.endpoints[1] in keep)
        ids = tuple(n.id for n in nodes)
        return ValidatedRawNetwork(
            name=name or self.name,
            nodes=nodes,
            edges=edges,
            node_ids=ids,
            index={node_id: i for i, node_id in enumerate(ids)},
            parallel_merged=self.parallel_merged,
        )


@dataclass(frozen=True)
class LinkElement:
    id: str
    kind: LinkKind
    weight: Optional[float]
    endpoints: Tuple[int, ...]
    provenance: FrozenSet[str] = field(default_factory=frozenset)
    source_id: Optional[int] = None
    sink_id: Optional[int] = None

    @property
    def junction(self) -> int:
        """Attachment junction of a VT or VB element."""
        return self.endpoints[0]


@dataclass(frozen=True)
class LinkNetwork:
    name: str
    junctions: FrozenSet[int]
    elements: Tuple[LinkElement, ...]

    @property
    def element_count(self) -> int:
        return len(self.elements)

    @property
    def scenario_count(self) -> int:
        return 1 << len(self.elements)

    def position(self, element_id: str) -> int:
        for i, element in enumerate(self.elements):
            if element.id == element_id:
                return i
        raise LinkModelError(f"unknown element {element_id}")

    def element(self, element_id: str) -> LinkElement:
        return self.elements[self.position(element_id)]

    def of_kind(self, kind: LinkKind) -> List[LinkElement]:
        return [e for e in self.elements if e.kind is kind]

    def sink_ids(self) -> List[int]:
        return sorted({e.sink_id for e in self.elements if e.kind is LinkKind.VB and e.sink_id is not None})

    def source_ids(self) -> List[int]:
        return sorted({e.source_id for e in self.elements if e.kind is LinkKind.VT and e.source_id is not None})

    def vb_elements(self, sink_id: int) -> List[LinkElement]:
        return [e for e in self.elements if e.kind is LinkKind.VB and e.sink_id == sink_id]

    def demand(self, sink_id: int) -> float:
        for element in self.vb_elements(sink_id):
            return -float(element.weight or 0.0)
        raise LinkModelError(f"sink {sink_id} has no VB element")

    def capacities(self) -> Dict[int, float]:
        return {
            e.source_id: float(e.weight or 0.0)
            for e in self.elements
            if e.kind is LinkKind.VT and e.source_id is not None
        }

    def total_demand(self) -> float:
        return sum(self.demand(sink) for sink in self.sink_ids())

    def mask_of(self, element_ids: Iterable[str]) -> int:
        positions = {e.id: i for i, e in enumerate(self.elements)}
        mask = 0
        for element_id in element_ids:
            if element_id not in positions:
                raise LinkModelError(f"unknown element {element_id}")
            mask |= 1 << positions[element_id]
        return mask

    def ids_of(self, mask: int) -> List[str]:
        return [e.id for i, e in enumerate(self.elements) if mask >> i & 1]


# ----------------------------------------------------------------------
# Validation and parallel merging
# ----------------------------------------------------------------------

def validate_raw(net: RawNetwork) -> ValidatedRawNetwork:
    """Check every RawNetwork invariant and report all violations at once."""
    problems: List[str] = []
    offending: List[object] = []

    if not net.nodes:
        raise NetworkValidationError(["no nodes"])

    seen_nodes: Dict[int, RawNode] = {}
    for node in net.nodes:
        if node.id in seen_nodes:
            problems.append(f"duplicate node id {node.id}")
            offending.append(node.id)
            continue
        seen_nodes[node.id] = node
        if not isinstance(node.id, int) or node.id <= 0:
            problems.append(f"node id {node.id} is not a positive integer")
            offending.append(node.id)
        if node.kind is NodeKind.SOURCE:
            if node.capacity is None:
                problems.append(f"generator {node.id} has no capacity")
                offending.append(node.id)
            elif not math.isfinite(node.capacity):
                problems.append(f"generator {node.id} has non-finite capacity {node.capacity}")
                offending.append(node.id)
            elif node.capacity < 0:
                problems.append(f"generator {node.id} has negative capacity")
                offending.append(node.id)
        elif node.capacity is not None:
            problems.append(f"capacity on non-generator node {node.id}")
            offending.append(node.id)
        if node.kind.is_sink_bearing:
            if node.demand is None:
                problems.append(f"sink {node.id} has no demand")
                offending.append(node.id)
            elif not math.isfinite(node.demand):
                problems.append(f"sink {node.id} has non-finite demand {node.demand}")
                offending.append(node.id)
            elif node.demand < 0:
                problems.append(f"sink {node.id} has negative demand")
                offending.append(node.id)
        elif node.demand is not None:
            problems.append(f"demand on non-sink node {node.id}")
            offending.append(node.id)

    seen_edges: set = set()
    for edge in net.edges:
        if edge.id in seen_edges:
            problems.append(f"duplicate edge id {edge.id}")
            offending.append(edge.id)
            continue
        seen_edges.add(edge.id)
        a, b = edge.endpoints
        for endpoint in (a, b):
            if endpoint not in seen_nodes:
                problems.append(f"edge {edge.id} has dangling endpoint {endpoint}")
                offending.append(edge.id)
        if a == b:
            problems.append(f"self-loop on node {a}")
            offending.append(edge.id)
        if edge.multiplicity < 1:
            problems.append(f"edge {edge.id} has multiplicity {edge.multiplicity}")
            offending.append(edge.id)

    if problems:
        raise NetworkValidationError(problems, offending_ids=offending)

    nodes = tuple(sorted(seen_nodes.values(), key=lambda n: n.id))
    ids = tuple(n.id for n in nodes)
    edges = tuple(sorted(net.edges, key=lambda e: edge_sort_key(e.id)))
    return ValidatedRawNetwork(
        name=net.name,
        nodes=nodes,
        edges=edges,
        node_ids=ids,
        index={node_id: i for i, node_id in enumerate(ids)},
    )


def merge_parallel(net: ValidatedRawNetwork) -> ValidatedRawNetwork:
    """Replace co-located parallel lines by one line that remembers every merged id."""
    groups: Dict[Tuple[int, int], List[RawEdge]] = {}
    for edge in net.edges:
        groups.setdefault(edge.pair, []).append(edge)

    merged: List[RawEdge] = []
    for members in groups.values():
        members.sort(key=lambda e: edge_sort_key(e.id))
        head = members[0]
        provenance = frozenset().union(*(e.provenance for e in members))
        merged.append(RawEdge(id=head.id, endpoints=head.endpoints, multiplicity=1, provenance=provenance))
        if len(members) > 1:
            logger.debug("Merged parallel lines %s into %s", [e.id for e in members], head.id)

    merged.sort(key=lambda e: edge_sort_key(e.id))
    return replace(net, edges=tuple(merged), parallel_merged=True)


# ----------------------------------------------------------------------
# Links-only representation
# ----------------------------------------------------------------------

def _numbered_labels(prefix: str, owner: int, count: int, *, dotted: bool) -> List[str]:
    if count == 1:
        return [f"{prefix}{owner}"]
    sep = "." if dotted else ""
    return [f"{prefix}{owner}{sep}{i}" for i in range(1, count + 1)]


def to_link_network(net: ValidatedRawNetwork) -> LinkNetwork:
    """Collapse generators and loads with their lines into VT/VB links.

    A generator with k lines becomes k VT links (``VT761``, ``VT762``) sharing
    ``source_id``. A load with one line becomes one VB link that absorbs the
    load node and the line; a load on k lines becomes k VB links. A substation
    that carries a load gets an implicit VB link of its own. Lines between
    substations become H links.
    """
    if not net.parallel_merged:
        logger.debug("Network %s not parallel-merged yet; merging first", net.name)
        net = merge_parallel(net)

    if not net.sources():
        raise LinkModelError(f"network {net.name} has no generator")
    if not net.sinks():
        raise LinkModelError(f"network {net.name} has no sink-bearing node")

    source_edges: Dict[int, List[RawEdge]] = defaultdict(list)
    sink_edges: Dict[int, List[RawEdge]] = defaultdict(list)
    h_edges: List[RawEdge] = []
    problems: List[str] = []

    for edge in net.edges:
        a, b = (net.node(x) for x in edge.endpoints)
        if a.kind.is_junction and b.kind.is_junction:
            h_edges.append(edge)
            continue
        if a.kind.is_junction or b.kind.is_junction:
            terminal, junction = (b, a) if a.kind.is_junction else (a, b)
            if terminal.kind is NodeKind.SOURCE:
                source_edges[terminal.id].append(edge)
            else:
                sink_edges[terminal.id].append(edge)
            continue
        kinds = {a.kind, b.kind}
        if NodeKind.SOURCE in kinds and NodeKind.SINK in kinds:
            problems.append(
                f"edge {edge.id} joins generator and load directly ({a.id}-{b.id}): "
                "isolated source-sink pair requires direct modeling"
            )
        else:
            problems.append(f"edge {edge.id} joins two terminal nodes ({a.id}-{b.id}) without a junction")
    if problems:
        raise LinkModelError("; ".join(problems))

    def other_end(edge: RawEdge, node_id: int) -> int:
        a, b = edge.endpoints
        return b if a == node_id else a

    def build(dotted: bool) -> List[LinkElement]:
        elements: List[LinkElement] = []
        vb_items: List[Tuple[Tuple[int, int], LinkElement]] = []
        for node in net.sinks():
            weight = -float(node.demand or 0.0)
            if node.kind is NodeKind.INTERCONNECTION_WITH_SINK:
                vb_items.append(((node.id, 0), LinkElement(
                    id=f"VB{node.id}", kind=LinkKind.VB, weight=weight, endpoints=(node.id,),
                    provenance=frozenset({node_ref(node.id)}), sink_id=node.id,
                )))
                continue
            attachments = sorted(sink_edges.get(node.id, []), key=lambda e: edge_sort_key(e.id))
            labels = _numbered_labels("VB", node.id, len(attachments), dotted=dotted)
            for i, (edge, label) in enumerate(zip(attachments, labels)):
                provenance = set(edge.provenance)
                if len(attachments) == 1:
                    provenance.add(node_ref(node.id))
                vb_items.append(((node.id, i), LinkElement(
                    id=label, kind=LinkKind.VB, weight=weight, endpoints=(other_end(edge, node.id),),
                    provenance=frozenset(provenance), sink_id=node.id,
                )))
        elements.extend(item for _, item in sorted(vb_items, key=lambda pair: pair[0]))

        for node in net.sources():
            attachments = sorted(source_edges.get(node.id, []), key=lambda e: edge_sort_key(e.id))
            labels = _numbered_labels("VT", node.id, len(attachments), dotted=dotted)
            for edge, label in zip(attachments, labels):
                provenance = set(edge.provenance)
                if len(attachments) == 1:
                    provenance.add(node_ref(node.id))
                elements.append(LinkElement(
                    id=label, kind=LinkKind.VT, weight=float(node.capacity or 0.0),
                    endpoints=(other_end(edge, node.id),), provenance=frozenset(provenance),
                    source_id=node.id,
                ))

        for k, edge in enumerate(h_edges, start=1):
            elements.append(LinkElement(
                id=f"H{k}", kind=LinkKind.H, weight=None, endpoints=tuple(edge.endpoints),
                provenance=frozenset(edge.provenance),
            ))
        return elements

    elements = build(dotted=False)
    if len({e.id for e in elements}) != len(elements):
        logger.debug("Concatenated link labels collide; using dotted labels")
        elements = build(dotted=True)

    for node in net.sources():
        if not source_edges.get(node.id):
            logger.warning("Generator %s has no line to any substation; ignored", node.id)
    for node in net.sinks():
        if node.kind is NodeKind.SINK and not sink_edges.get(node.id):
            logger.warning("Load %s has no line to any substation; it can never be supplied", node.id)

    used = {j for e in elements for j in e.endpoints}
    for node in net.nodes:
        if node.kind.is_junction and node.id not in used:
            logger.warning("Substation %s has no lines; dropped from the link network", node.id)

    if not any(e.kind is LinkKind.VB for e in elements):
        raise LinkModelError(f"network {net.name} has no attached sink")

    return LinkNetwork(name=net.name, junctions=frozenset(used), elements=tuple(elements))


def provenance_is_partition(elements: Sequence[LinkElement]) -> bool:
    """True when no raw element is claimed by two link elements."""
    seen: set = set()
    for element in elements:
        if seen & element.provenance:
            return False
        seen |= element.provenance
    return True
