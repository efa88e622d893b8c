"""Split a grid into groups of interconnected sinks and their generators.

Generators never carry power between other nodes, so the groups are the
connected components of the grid once every generator is removed. A
generator adjacent to several components feeds each of them but joins none.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

import networkx as nx

from survnet.errors import NetworkValidationError
from survnet.services.link_model import NodeKind, ValidatedRawNetwork, merge_parallel, to_link_network
from survnet.services.reduction import EquivalenceMode, map_network

logger = logging.getLogger("survnet.grouping")


@dataclass(frozen=True)
class Group:
    index: int
    members: Tuple[int, ...]
    sinks: Tuple[int, ...]
    generators: Tuple[int, ...]


@dataclass(frozen=True)
class GroupDecomposition:
    groups: Tuple[Group, ...]
    shared_generators: Mapping[int, FrozenSet[int]] = field(default_factory=dict)
    orphans: Tuple[int, ...] = ()

    def group_of(self, node_id: int) -> Group:
        for group in self.groups:
            if node_id in group.members:
                return group
        raise NetworkValidationError([f"node {node_id} belongs to no group"], offending_ids=[node_id])


@dataclass(frozen=True)
class GroupRow:
    group: Group
    per_sink: Mapping[int, FrozenSet[int]]

    @property
    def differs(self) -> bool:
        return len(set(self.per_sink.values())) > 1


def format_id_set(ids: Iterable[int]) -> str:
    return "{" + ",".join(str(i) for i in sorted(ids)) + "}"


def decompose_groups(net: ValidatedRawNetwork) -> GroupDecomposition:
    """Connected components over the non-generator nodes, numbered by smallest member."""
    if not net.parallel_merged:
        net = merge_parallel(net)
    graph = nx.Graph()
    graph.add_nodes_from(n.id for n in net.nodes if n.kind is not NodeKind.SOURCE)
    adjacent_sources: Dict[int, set] = {n.id: set() for n in net.nodes if n.kind is not NodeKind.SOURCE}
    for edge in net.edges:
        a, b = (net.node(x) for x in edge.endpoints)
        if a.kind is NodeKind.SOURCE and b.kind is NodeKind.SOURCE:
            continue
        if a.kind is NodeKind.SOURCE:
            adjacent_sources[b.id].add(a.id)
        elif b.kind is NodeKind.SOURCE:
            adjacent_sources[a.id].add(b.id)
        else:
            graph.add_edge(a.id, b.id)

    components = sorted((sorted(c) for c in nx.connected_components(graph)), key=lambda c: c[0])
    groups: List[Group] = []
    for component in components:
        sinks = tuple(i for i in component if net.node(i).kind.is_sink_bearing)
        if not sinks:
            logger.debug("Component %s carries no sink; not a group", component)
            continue
        generators = sorted(set().union(*(adjacent_sources[i] for i in component)))
        groups.append(Group(
            index=len(groups) + 1,
            members=tuple(component),
            sinks=sinks,
            generators=tuple(generators),
        ))

    touched: Dict[int, set] = {}
    for group in groups:
        for gen in group.generators:
            touched.setdefault(gen, set()).add(group.index)
    shared = {gen: frozenset(indices) for gen, indices in sorted(touched.items()) if len(indices) > 1}
    orphans = tuple(n.id for n in net.sources() if n.id not in touched)
    for gen in orphans:
        logger.warning("Generator %s is adjacent to no group; excluded", gen)
    return GroupDecomposition(groups=tuple(groups), shared_generators=shared, orphans=orphans)


def group_sources(
    net: ValidatedRawNetwork,
    group: Group,
    *,
    source_transit: bool = False,
    mode: EquivalenceMode = EquivalenceMode.STRUCTURAL,
) -> Dict[int, FrozenSet[int]]:
    """Per-sink generator sets obtained by mapping the group's own sub-grid."""
    per_sink: Dict[int, FrozenSet[int]] = {sink: frozenset() for sink in group.sinks}
    if not group.generators:
        return per_sink
    sub_grid = net.subgrid(group.members + group.generators, name=f"{net.name}/group{group.index}")
    mapping = map_network(to_link_network(sub_grid), mode, source_transit=source_transit)
    for entry in mapping.assignment.values():
        per_sink[entry.sink_id] = per_sink[entry.sink_id] | frozenset(entry.own.source_classes)
    return per_sink


def reachable_sources(
    net: ValidatedRawNetwork,
    sink: int,
    *,
    source_transit: bool = False,
    decomposition: Optional[GroupDecomposition] = None,
) -> FrozenSet[int]:
    if not net.node(sink).kind.is_sink_bearing:
        raise NetworkValidationError([f"node {sink} is not a sink"], offending_ids=[sink])
    decomposition = decomposition or decompose_groups(net)
    group = decomposition.group_of(sink)
    return group_sources(net, group, source_transit=source_transit)[sink]


def group_table(
    net: ValidatedRawNetwork, *, source_transit: bool = False
) -> Tuple[GroupDecomposition, List[GroupRow]]:
    decomposition = decompose_groups(net)
    rows = []
    for group in decomposition.groups:
        row = GroupRow(group=group, per_sink=group_sources(net, group, source_transit=source_transit))
        if row.differs:
            logger.warning("Group %d: sinks see different generator sets", group.index)
        rows.append(row)
    return decomposition, rows


def format_group_table(rows: Iterable[GroupRow]) -> List[str]:
    lines: List[str] = []
    for row in rows:
        lines.append(f"Group {row.group.index}")
        lines.extend(f"{sink}: {format_id_set(gens)}" for sink, gens in sorted(row.per_sink.items()))
    return lines


def format_group_export(decomposition: GroupDecomposition, rows: Iterable[GroupRow]) -> List[str]:
    lines: List[str] = []
    for row in rows:
        group = row.group
        lines.append(
            f"group {group.index}: sinks={format_id_set(group.sinks)} gens={format_id_set(group.generators)}"
        )
        lines.extend(f"sink {sink}: {format_id_set(gens)}" for sink, gens in sorted(row.per_sink.items()))
    for gen, indices in decomposition.shared_generators.items():
        lines.append(f"shared {gen}: groups={format_id_set(indices)}")
    for gen in decomposition.orphans:
        lines.append(f"orphan {gen}")
    return lines
