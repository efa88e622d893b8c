"""Series reduction and the per-sink mapping procedure.

Mapping a multi-sink network works sink link by sink link: drop every other
VB link, drop what is no longer connected to the remaining VB link, fold
series chains into single links, then deduplicate the resulting
sub-topologies by canonical key. Each VB link ends up assigned to one
representative sub-topology together with the element correspondence needed
to translate fault scenarios and source classes.
"""

from __future__ import annotations

import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from survnet.errors import ExtractionError, LinkModelError
from survnet.services.link_model import KIND_ORDER, LinkElement, LinkKind, LinkNetwork

logger = logging.getLogger("survnet.reduction")

Vertex = Tuple[str, int]


class EquivalenceMode(str, Enum):
    LABELED = "labeled"
    STRUCTURAL = "structural"


@dataclass(frozen=True)
class CanonicalForm:
    key: bytes
    positions: Mapping[Vertex, int]


@dataclass(frozen=True)
class SubTopology:
    sink_vb: str
    network: LinkNetwork
    provenance_map: Mapping[str, FrozenSet[str]]
    canonical_key: bytes
    mode: EquivalenceMode = EquivalenceMode.STRUCTURAL
    source_transit: bool = False
    degenerate: bool = False
    positions: Mapping[Vertex, int] = field(default_factory=dict, compare=False, repr=False)

    @property
    def m(self) -> int:
        return self.network.element_count

    @property
    def vb(self) -> LinkElement:
        for element in self.network.elements:
            if element.kind is LinkKind.VB:
                return element
        raise ExtractionError(f"sub-topology {self.sink_vb} lost its VB element")

    @property
    def source_classes(self) -> Tuple[int, ...]:
        """Source ids in ascending order; the position is the class index."""
        return tuple(self.network.source_ids())

    def class_capacities(self) -> Tuple[float, ...]:
        capacities = self.network.capacities()
        return tuple(capacities[s] for s in self.source_classes)

    def key_digest(self) -> str:
        return key_digest(self.canonical_key)


@dataclass(frozen=True)
class AssignmentEntry:
    """How one VB link of the original network maps onto its representative."""

    vb: str
    sink_id: int
    sub_index: int
    element_bijection: Tuple[str, ...]
    provenance_bits: Tuple[int, ...]
    class_sources: Tuple[int, ...]
    own: SubTopology = field(compare=False, repr=False)


@dataclass(frozen=True)
class MappingResult:
    subs: Tuple[SubTopology, ...]
    assignment: Mapping[str, AssignmentEntry]
    vb_count: int
    mode: EquivalenceMode
    source_transit: bool = False

    @property
    def scenario_total(self) -> int:
        return sum(1 << sub.m for sub in self.subs)

    def entries_for_sink(self, sink_id: int) -> List[AssignmentEntry]:
        return [entry for entry in self.assignment.values() if entry.sink_id == sink_id]

    def sink_ids(self) -> List[int]:
        return sorted({entry.sink_id for entry in self.assignment.values()})


def key_digest(key: bytes) -> str:
    return hashlib.sha1(key).hexdigest()[:16]


# ----------------------------------------------------------------------
# Series reduction
# ----------------------------------------------------------------------

def _incidence(elements: Mapping[str, LinkElement]) -> Dict[int, List[str]]:
    incidence: Dict[int, List[str]] = defaultdict(list)
    for element_id, element in elements.items():
        for junction in element.endpoints:
            incidence[junction].append(element_id)
    return incidence


def _merge_pair(keep: LinkElement, absorb: LinkElement, junction: int) -> Optional[LinkElement]:
    """Fold two elements meeting at a degree-2 junction, or None when they may not merge."""
    kinds = {keep.kind, absorb.kind}
    if keep.kind is LinkKind.H and absorb.kind is LinkKind.H:
        far = [j for j in keep.endpoints if j != junction] + [j for j in absorb.endpoints if j != junction]
        return LinkElement(
            id=keep.id, kind=LinkKind.H, weight=None, endpoints=(far[0], far[1]),
            provenance=keep.provenance | absorb.provenance,
        )
    if LinkKind.H in kinds and len(kinds) == 2:
        terminal, h_link = (keep, absorb) if keep.kind is not LinkKind.H else (absorb, keep)
        far = next(j for j in h_link.endpoints if j != junction)
        return LinkElement(
            id=terminal.id, kind=terminal.kind, weight=terminal.weight, endpoints=(far,),
            provenance=terminal.provenance | h_link.provenance,
            source_id=terminal.source_id, sink_id=terminal.sink_id,
        )
    return None


def _series_reduce(
    net: LinkNetwork, junction_order: Optional[Sequence[int]] = None
) -> Tuple[LinkNetwork, Dict[str, FrozenSet[str]]]:
    order_index = {e.id: i for i, e in enumerate(net.elements)}
    elements: Dict[str, LinkElement] = {e.id: e for e in net.elements}
    origin: Dict[str, FrozenSet[str]] = {e.id: frozenset({e.id}) for e in net.elements}
    junctions = set(net.junctions)
    if junction_order is None:
        priority = {j: (0, j) for j in junctions}
    else:
        priority = {j: (i, j) for i, j in enumerate(junction_order)}

    while True:
        incidence = _incidence(elements)
        merged = False
        for junction in sorted(junctions, key=lambda j: priority.get(j, (len(priority), j))):
            incident = incidence.get(junction, [])
            if len(incident) != 2 or incident[0] == incident[1]:
                continue
            first, second = sorted(incident, key=lambda i: (KIND_ORDER[elements[i].kind], order_index[i]))
            folded = _merge_pair(elements[first], elements[second], junction)
            if folded is None:
                continue
            absorbed = second if folded.id == first else first
            origin[folded.id] = origin[first] | origin[second]
            del elements[absorbed]
            del origin[absorbed]
            junctions.discard(junction)
            if folded.kind is LinkKind.H and folded.endpoints[0] == folded.endpoints[1]:
                # A loop never carries anything between two junctions.
                del elements[folded.id]
                del origin[folded.id]
            else:
                elements[folded.id] = folded
            merged = True
            break
        if not merged:
            break

    ordered = sorted(elements.values(), key=lambda e: (KIND_ORDER[e.kind], order_index[e.id]))
    used = {j for e in ordered for j in e.endpoints}
    reduced = LinkNetwork(name=net.name, junctions=frozenset(used & junctions), elements=tuple(ordered))
    return reduced, {e.id: origin[e.id] for e in ordered}


def series_reduce(net: LinkNetwork, junction_order: Optional[Sequence[int]] = None) -> LinkNetwork:
    """Fold series chains (H+H, VT+H, VB+H at degree-2 junctions) until nothing changes."""
    reduced, _ = _series_reduce(net, junction_order)
    return reduced


# ----------------------------------------------------------------------
# Canonical form
# ----------------------------------------------------------------------

def _weight_label(weight: Optional[float]) -> str:
    return repr(float(weight or 0.0))


def _canonical_graph(
    net: LinkNetwork, mode: EquivalenceMode
) -> Tuple[List[Vertex], List[str], List[Tuple[str, Vertex, Vertex, str]]]:
    vertices: List[Vertex] = [("J", j) for j in sorted(net.junctions)]
    labels: List[str] = ["J"] * len(vertices)
    for source_id in net.source_ids():
        vertices.append(("S", source_id))
        labels.append(f"S:{source_id}" if mode is EquivalenceMode.LABELED else "S")
    vertices.append(("T", 0))
    labels.append("T")

    edges: List[Tuple[str, Vertex, Vertex, str]] = []
    for element in net.elements:
        if element.kind is LinkKind.H:
            a, b = element.endpoints
            edges.append(("H", ("J", a), ("J", b), element.id))
        elif element.kind is LinkKind.VT:
            edges.append((f"VT:{_weight_label(element.weight)}", ("J", element.junction),
                          ("S", int(element.source_id or 0)), element.id))
        else:
            edges.append(("VB", ("J", element.junction), ("T", 0), element.id))
    return vertices, labels, edges


def _rank(signatures: Sequence[object]) -> List[int]:
    ranking = {sig: i for i, sig in enumerate(sorted(set(signatures)))}  # type: ignore[type-var]
    return [ranking[sig] for sig in signatures]


def _refine(adjacency: Sequence[Sequence[Tuple[str, int]]], colors: List[int]) -> List[int]:
    while True:
        signatures = [
            (colors[v], tuple(sorted((label, colors[u]) for label, u in adjacency[v])))
            for v in range(len(colors))
        ]
        refined = _rank(signatures)
        if len(set(refined)) == len(set(colors)):
            return refined
        colors = refined


def canonical_form(net: LinkNetwork, mode: EquivalenceMode, *, source_transit: bool = False) -> CanonicalForm:
    """Canonical labeling by color refinement plus exhaustive individualization.

    Junctions, source classes and the sink terminal are the vertices; every
    link element is a labeled edge. The lexicographically smallest
    serialization over all discrete refinements is the key.
    """
    vertices, labels, edges = _canonical_graph(net, mode)
    index = {v: i for i, v in enumerate(vertices)}
    adjacency: List[List[Tuple[str, int]]] = [[] for _ in vertices]
    indexed_edges: List[Tuple[str, int, int]] = []
    for label, a, b, _ in edges:
        ia, ib = index[a], index[b]
        adjacency[ia].append((label, ib))
        adjacency[ib].append((label, ia))
        indexed_edges.append((label, ia, ib))
    neighborhoods = [tuple(sorted(adj)) for adj in adjacency]

    best: List[Optional[Tuple[Tuple[str, ...], Tuple[Tuple[str, int, int], ...]]]] = [None]
    best_colors: List[List[int]] = [[]]

    def serialize(colors: List[int]) -> Tuple[Tuple[str, ...], Tuple[Tuple[str, int, int], ...]]:
        by_position = [""] * len(colors)
        for v, position in enumerate(colors):
            by_position[position] = labels[v]
        edge_rows = tuple(sorted(
            (label, min(colors[a], colors[b]), max(colors[a], colors[b])) for label, a, b in indexed_edges
        ))
        return tuple(by_position), edge_rows

    def search(colors: List[int]) -> None:
        colors = _refine(adjacency, colors)
        cells: Dict[int, List[int]] = defaultdict(list)
        for v, color in enumerate(colors):
            cells[color].append(v)
        target = next((cells[c] for c in sorted(cells) if len(cells[c]) > 1), None)
        if target is None:
            candidate = serialize(colors)
            if best[0] is None or candidate < best[0]:
                best[0] = candidate
                best_colors[0] = colors
            return
        tried: set = set()
        for v in target:
            # Twins are interchangeable: branching on one of them is enough.
            if neighborhoods[v] in tried:
                continue
            tried.add(neighborhoods[v])
            search(_rank([(colors[u], 0 if u == v else 1) for u in range(len(colors))]))

    search(_rank(labels))
    vertex_labels, edge_rows = best[0]  # type: ignore[misc]
    text = "survnet-key/1|mode={}|transit={}|V={}|E={}".format(
        mode.value,
        int(source_transit),
        ",".join(vertex_labels),
        ";".join(f"{label}@{a}-{b}" for label, a, b in edge_rows),
    )
    positions = {vertices[v]: position for v, position in enumerate(best_colors[0])}
    return CanonicalForm(key=text.encode("utf-8"), positions=positions)


def canonical_key(
    sub: SubTopology, mode: EquivalenceMode = EquivalenceMode.STRUCTURAL, *, source_transit: Optional[bool] = None
) -> bytes:
    transit = sub.source_transit if source_transit is None else source_transit
    if mode is sub.mode and transit == sub.source_transit and sub.canonical_key:
        return sub.canonical_key
    return canonical_form(sub.network, mode, source_transit=transit).key


# ----------------------------------------------------------------------
# Mapping procedure
# ----------------------------------------------------------------------

def split_multi_vb(net: LinkNetwork, sink: int) -> List[str]:
    """The VB links of ``sink``; each one becomes its own sub-topology."""
    vb_ids = [e.id for e in net.vb_elements(sink)]
    if not vb_ids:
        raise ExtractionError(f"sink {sink} has no VB element")
    return vb_ids


def _reachable_junctions(net: LinkNetwork, start: int, *, source_transit: bool) -> set:
    graph = nx.Graph()
    graph.add_node(("J", start))
    for element in net.elements:
        if element.kind is LinkKind.H:
            a, b = element.endpoints
            graph.add_edge(("J", a), ("J", b))
        elif element.kind is LinkKind.VT and source_transit:
            graph.add_edge(("J", element.junction), ("S", element.source_id))
    component = nx.node_connected_component(graph, ("J", start))
    return {j for kind, j in component if kind == "J"}


def extract_sink_subtopology(
    net: LinkNetwork,
    vb: str,
    *,
    mode: EquivalenceMode = EquivalenceMode.STRUCTURAL,
    source_transit: bool = False,
    junction_order: Optional[Sequence[int]] = None,
) -> SubTopology:
    """Keep one VB link, drop what it cannot reach, then fold series chains."""
    try:
        target = net.element(vb)
    except LinkModelError:
        raise ExtractionError(f"VB element {vb} not found in {net.name}") from None
    if target.kind is not LinkKind.VB:
        raise ExtractionError(f"element {vb} is a {target.kind.value} link, not a VB link")

    survivors = [e for e in net.elements if e.kind is not LinkKind.VB or e.id == vb]
    trimmed_view = LinkNetwork(name=net.name, junctions=net.junctions, elements=tuple(survivors))
    reachable = _reachable_junctions(trimmed_view, target.junction, source_transit=source_transit)
    kept = tuple(e for e in survivors if all(j in reachable for j in e.endpoints))
    extracted = LinkNetwork(name=f"{net.name}/{vb}", junctions=frozenset(reachable), elements=kept)

    reduced, origin = _series_reduce(extracted, junction_order)
    degenerate = not any(e.kind is LinkKind.VT for e in reduced.elements)
    if degenerate:
        logger.warning("Sub-topology for %s reaches no generator; the sink never survives", vb)
    form = canonical_form(reduced, mode, source_transit=source_transit)
    return SubTopology(
        sink_vb=vb,
        network=reduced,
        provenance_map=origin,
        canonical_key=form.key,
        mode=mode,
        source_transit=source_transit,
        degenerate=degenerate,
        positions=form.positions,
    )


def element_bijection(rep: SubTopology, other: SubTopology) -> Tuple[Tuple[str, ...], Tuple[int, ...]]:
    """Match ``other`` onto ``rep`` through their shared canonical labeling.

    Returns, per representative element index, the corresponding element id in
    ``other``; and per representative class index, the source id in ``other``.
    """
    if rep.canonical_key != other.canonical_key:
        raise ExtractionError(f"{other.sink_vb} is not equivalent to {rep.sink_vb}")

    def signature(sub: SubTopology, element: LinkElement) -> Tuple[object, ...]:
        pos = sub.positions
        if element.kind is LinkKind.H:
            a, b = (pos[("J", j)] for j in element.endpoints)
            return ("H", min(a, b), max(a, b))
        if element.kind is LinkKind.VT:
            return ("VT", pos[("J", element.junction)], pos[("S", int(element.source_id or 0))])
        return ("VB", pos[("J", element.junction)])

    pool: Dict[Tuple[object, ...], List[str]] = defaultdict(list)
    for element in other.network.elements:
        pool[signature(other, element)].append(element.id)
    bijection: List[str] = []
    for element in rep.network.elements:
        bucket = pool[signature(rep, element)]
        bijection.append(bucket.pop(0))

    by_position = {position: vertex for vertex, position in other.positions.items()}
    classes = tuple(by_position[rep.positions[("S", s)]][1] for s in rep.source_classes)
    return tuple(bijection), classes


def map_network(
    net: LinkNetwork,
    mode: EquivalenceMode = EquivalenceMode.STRUCTURAL,
    *,
    source_transit: bool = False,
) -> MappingResult:
    """Run the full mapping procedure over every VB link of ``net``."""
    positions = {e.id: i for i, e in enumerate(net.elements)}
    subs: List[SubTopology] = []
    by_key: Dict[bytes, int] = {}
    assignment: Dict[str, AssignmentEntry] = {}

    vb_elements = [net.element(vb_id) for sink in net.sink_ids() for vb_id in split_multi_vb(net, sink)]
    for vb in vb_elements:
        sub = extract_sink_subtopology(net, vb.id, mode=mode, source_transit=source_transit)
        index = by_key.get(sub.canonical_key)
        if index is None:
            index = len(subs)
            by_key[sub.canonical_key] = index
            subs.append(sub)
        rep = subs[index]
        bijection, classes = element_bijection(rep, sub)
        bits = []
        for own_id in bijection:
            mask = 0
            for original in sub.provenance_map[own_id]:
                mask |= 1 << positions[original]
            bits.append(mask)
        assignment[vb.id] = AssignmentEntry(
            vb=vb.id,
            sink_id=int(vb.sink_id or 0),
            sub_index=index,
            element_bijection=bijection,
            provenance_bits=tuple(bits),
            class_sources=classes,
            own=sub,
        )

    logger.debug("Mapped %d VB links onto %d sub-topologies (%s)", len(vb_elements), len(subs), mode.value)
    return MappingResult(
        subs=tuple(subs),
        assignment=assignment,
        vb_count=len(vb_elements),
        mode=mode,
        source_transit=source_transit,
    )
