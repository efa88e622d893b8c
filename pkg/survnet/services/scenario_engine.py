"""Fault-scenario databases and lookup queries over mapped sub-topologies.

A scenario is an int bitmask: bit i set means element i of the owning
network is faulty. A database stores, for every scenario of one
sub-topology, the bitset of source classes still connected to the sink.
Queries on the original network project the scenario onto the sink's
sub-topology and read the answer back without any graph search.
"""

from __future__ import annotations

import csv
import logging
import os
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from survnet.configs import SettingsRepo
from survnet.errors import (
    DatabaseFormatError,
    DatabaseLimitError,
    MissingDatabaseError,
    ProbabilityError,
    SurvnetError,
)
from survnet.services.link_model import LinkKind, LinkNetwork
from survnet.services.reduction import AssignmentEntry, MappingResult, SubTopology

logger = logging.getLogger("survnet.scenario_engine")

MAGIC = b"SVDB"
FORMAT_VERSION = 1
NO_CLASS = 0xFFFFFFFF
MAX_CLASSES = 64
DEFAULT_MAX_ELEMENTS = 30
DEFAULT_CHUNK_SIZE = 4096

_KIND_CODES = {LinkKind.VT: 0, LinkKind.VB: 1, LinkKind.H: 2}
_KIND_BY_CODE = {code: kind for kind, code in _KIND_CODES.items()}
_HEADER = struct.Struct("<4sBHH")
_ELEMENT = struct.Struct("<BdII")

Availability = Union[float, Mapping[str, float]]


def check_scenario(bitmask: int, m: int) -> int:
    if bitmask < 0 or bitmask >= 1 << m:
        raise SurvnetError(f"scenario {bitmask} outside 0..2^{m}-1")
    return bitmask


def _meets(delivered: float, demand: float) -> bool:
    return delivered >= demand - 1e-9 * max(1.0, abs(demand))


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class _Compiled:
    m: int
    vb_bit: int
    start: int
    links: Tuple[Tuple[int, int, int], ...]
    terminals: Tuple[Tuple[int, int, int], ...]


def _compile(sub: SubTopology) -> _Compiled:
    net = sub.network
    vertices: Dict[Tuple[str, int], int] = {("J", j): i for i, j in enumerate(sorted(net.junctions))}
    classes = {source_id: i for i, source_id in enumerate(sub.source_classes)}
    links: List[Tuple[int, int, int]] = []
    terminals: List[Tuple[int, int, int]] = []
    vb_bit = -1
    start = 0
    for bit, element in enumerate(net.elements):
        if element.kind is LinkKind.VB:
            vb_bit = bit
            start = vertices[("J", element.junction)]
        elif element.kind is LinkKind.H:
            a, b = element.endpoints
            links.append((bit, vertices[("J", a)], vertices[("J", b)]))
        else:
            junction = vertices[("J", element.junction)]
            terminals.append((bit, junction, classes[int(element.source_id or 0)]))
            if sub.source_transit:
                point = vertices.setdefault(("S", int(element.source_id or 0)), len(vertices))
                links.append((bit, junction, point))
    return _Compiled(m=net.element_count, vb_bit=vb_bit, start=start, links=tuple(links), terminals=tuple(terminals))


def _evaluate(compiled: _Compiled, s: int) -> int:
    if compiled.vb_bit < 0 or s >> compiled.vb_bit & 1:
        return 0
    reached = 1 << compiled.start
    alive = [(u, v) for bit, u, v in compiled.links if not s >> bit & 1]
    changed = True
    while changed:
        changed = False
        for u, v in alive:
            if (reached >> u & 1) != (reached >> v & 1):
                reached |= (1 << u) | (1 << v)
                changed = True
    classes = 0
    for bit, junction, cls in compiled.terminals:
        if not s >> bit & 1 and reached >> junction & 1:
            classes |= 1 << cls
    return classes


def evaluate_scenario(sub: SubTopology, s: int) -> int:
    """Bitset of source classes connected to the sink of ``sub`` under scenario ``s``."""
    check_scenario(s, sub.m)
    return _evaluate(_compile(sub), s)


def delivered_capacity(sub: SubTopology, classes: int) -> float:
    """Capacity of the connected classes; a generator counts once however many links reach it."""
    capacities = sub.class_capacities()
    return float(sum(cap for i, cap in enumerate(capacities) if classes >> i & 1))


def classes_to_sources(classes: int, class_sources: Sequence[int]) -> FrozenSet[int]:
    return frozenset(source for i, source in enumerate(class_sources) if classes >> i & 1)


# ----------------------------------------------------------------------
# Databases
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ElementDescriptor:
    kind: LinkKind
    weight: float
    class_index: Optional[int]
    provenance_digest: int


@dataclass(frozen=True)
class ScenarioDatabase:
    sub_key: bytes
    m: int
    class_count: int
    element_table: Tuple[ElementDescriptor, ...]
    records: np.ndarray = field(compare=False, repr=False)

    def lookup(self, s: int) -> int:
        return int(self.records[check_scenario(s, self.m)])

    def class_capacities(self) -> Tuple[float, ...]:
        capacities = [0.0] * self.class_count
        for descriptor in self.element_table:
            if descriptor.kind is LinkKind.VT and descriptor.class_index is not None:
                capacities[descriptor.class_index] = descriptor.weight
        return tuple(capacities)

    @property
    def vb_bit(self) -> int:
        for bit, descriptor in enumerate(self.element_table):
            if descriptor.kind is LinkKind.VB:
                return bit
        raise DatabaseFormatError("database has no VB element")

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, self.m, self.class_count)]
        for d in self.element_table:
            parts.append(_ELEMENT.pack(
                _KIND_CODES[d.kind],
                d.weight,
                NO_CLASS if d.class_index is None else d.class_index,
                d.provenance_digest,
            ))
        parts.append(np.ascontiguousarray(self.records, dtype="<u8").tobytes())
        return b"".join(parts)

    def write(self, path: Union[str, Path]) -> Path:
        target = Path(path)
        target.write_bytes(self.to_bytes())
        return target

    def write_csv(self, path: Union[str, Path]) -> Path:
        capacities = self.class_capacities()
        target = Path(path)
        with open(target, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["scenario_bitmask", "connected_classes", "delivered_capacity"])
            for s, record in enumerate(self.records.tolist()):
                connected = [i for i in range(self.class_count) if record >> i & 1]
                delivered = sum(capacities[i] for i in connected)
                writer.writerow([s, " ".join(str(i) for i in connected), repr(float(delivered))])
        return target


def database_from_bytes(payload: bytes, sub_key: bytes = b"") -> ScenarioDatabase:
    if len(payload) < _HEADER.size:
        raise DatabaseFormatError("truncated database header")
    magic, version, m, class_count = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise DatabaseFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatabaseFormatError(f"unsupported database version {version}")
    offset = _HEADER.size
    table: List[ElementDescriptor] = []
    for _ in range(m):
        if offset + _ELEMENT.size > len(payload):
            raise DatabaseFormatError("truncated element table")
        code, weight, cls, digest = _ELEMENT.unpack_from(payload, offset)
        offset += _ELEMENT.size
        if code not in _KIND_BY_CODE:
            raise DatabaseFormatError(f"unknown element kind code {code}")
        table.append(ElementDescriptor(_KIND_BY_CODE[code], weight, None if cls == NO_CLASS else cls, digest))
    expected = (1 << m) * 8
    if len(payload) - offset != expected:
        raise DatabaseFormatError(f"expected {1 << m} records, found {(len(payload) - offset) // 8}")
    records = np.frombuffer(payload, dtype="<u8", offset=offset).astype(np.uint64)
    records.setflags(write=False)
    return ScenarioDatabase(sub_key=sub_key, m=m, class_count=class_count, element_table=tuple(table), records=records)


def load_database(path: Union[str, Path], sub_key: bytes = b"") -> ScenarioDatabase:
    return database_from_bytes(Path(path).read_bytes(), sub_key)


def _evaluate_chunk(compiled: _Compiled, lo: int, hi: int) -> np.ndarray:
    return np.fromiter((_evaluate(compiled, s) for s in range(lo, hi)), dtype=np.uint64, count=hi - lo)


def _worker_count(threads: Optional[int]) -> int:
    if threads is None:
        threads = SettingsRepo().threads()
    return threads if threads > 0 else (os.cpu_count() or 1)


def build_database(
    sub: SubTopology,
    *,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
    threads: Optional[int] = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> ScenarioDatabase:
    """Enumerate all 2^m scenarios of ``sub`` in ascending bitmask order."""
    if sub.m > max_elements:
        raise DatabaseLimitError(sub.m, max_elements)
    classes = sub.source_classes
    if len(classes) > MAX_CLASSES:
        raise DatabaseFormatError(
            f"sub-topology {sub.sink_vb} has {len(classes)} source classes; at most {MAX_CLASSES} fit a record"
        )
    compiled = _compile(sub)
    total = 1 << sub.m
    workers = _worker_count(threads)
    bounds = [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]

    if workers <= 1 or len(bounds) <= 1:
        chunks = [_evaluate_chunk(compiled, lo, hi) for lo, hi in bounds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
            futures = [pool.submit(_evaluate_chunk, compiled, lo, hi) for lo, hi in bounds]
            chunks = [future.result() for future in futures]
    records = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint64)
    records.setflags(write=False)

    class_index = {source_id: i for i, source_id in enumerate(classes)}
    table = []
    for element in sub.network.elements:
        provenance = ",".join(sorted(sub.provenance_map.get(element.id, frozenset({element.id}))))
        table.append(ElementDescriptor(
            kind=element.kind,
            weight=float(element.weight or 0.0),
            class_index=class_index[element.source_id] if element.kind is LinkKind.VT else None,
            provenance_digest=zlib.crc32(provenance.encode("utf-8")) & 0xFFFFFFFF,
        ))
    logger.debug("Built database for %s: m=%d, %d records, %d workers", sub.sink_vb, sub.m, total, workers)
    return ScenarioDatabase(
        sub_key=sub.canonical_key,
        m=sub.m,
        class_count=len(classes),
        element_table=tuple(table),
        records=records,
    )


def build_databases(mapping: MappingResult, **kwargs) -> List[ScenarioDatabase]:
    return [build_database(sub, **kwargs) for sub in mapping.subs]


def is_monotone(db: ScenarioDatabase, pairs: Iterable[Tuple[int, int]]) -> bool:
    """Check entry[S'] is a subset of entry[S] for each (S, S') with S a subset of S'."""
    for s, s_prime in pairs:
        if s & ~s_prime:
            raise SurvnetError(f"{s} is not a subset of {s_prime}")
        if db.lookup(s_prime) & ~db.lookup(s):
            return False
    return True


# ----------------------------------------------------------------------
# Queries
# ----------------------------------------------------------------------

def project_scenario(entry: AssignmentEntry, original: int) -> int:
    """A sub-topology element is faulty iff any original element it absorbed is faulty."""
    projected = 0
    for i, mask in enumerate(entry.provenance_bits):
        if original & mask:
            projected |= 1 << i
    return projected


@dataclass(frozen=True)
class Verdict:
    sink_id: int
    connected: FrozenSet[int]
    delivered: float
    demand: float
    survives: bool
    scenario: int = 0


def _database_for(dbs: Sequence[Optional[ScenarioDatabase]], entry: AssignmentEntry) -> ScenarioDatabase:
    if entry.sub_index >= len(dbs) or dbs[entry.sub_index] is None:
        raise MissingDatabaseError(f"no database for sub-topology {entry.sub_index} (serving {entry.vb})")
    return dbs[entry.sub_index]  # type: ignore[return-value]


def _sink_entries(mapping: MappingResult, sink: int) -> List[AssignmentEntry]:
    entries = mapping.entries_for_sink(sink)
    if not entries:
        raise SurvnetError(f"sink {sink} has no VB link in the mapping")
    return entries


def query_survivability(
    net: LinkNetwork,
    mapping: MappingResult,
    dbs: Sequence[Optional[ScenarioDatabase]],
    original: int,
    sink: int,
) -> Verdict:
    """Answer a fault query for one sink by database lookup only."""
    check_scenario(original, net.element_count)
    capacities = net.capacities()
    connected: set = set()
    intact = False
    for entry in _sink_entries(mapping, sink):
        db = _database_for(dbs, entry)
        projected = project_scenario(entry, original)
        if not projected >> db.vb_bit & 1:
            intact = True
        connected |= classes_to_sources(db.lookup(projected), entry.class_sources)
    delivered = float(sum(capacities[s] for s in connected))
    demand = net.demand(sink)
    return Verdict(
        sink_id=sink,
        connected=frozenset(connected),
        delivered=delivered,
        demand=demand,
        survives=intact and _meets(delivered, demand),
        scenario=original,
    )


def _surviving_graph(net: LinkNetwork, original: int, source_transit: bool) -> Tuple[nx.MultiGraph, List]:
    graph = nx.MultiGraph()
    graph.add_nodes_from(("J", j) for j in net.junctions)
    alive_vt = []
    for bit, element in enumerate(net.elements):
        if original >> bit & 1:
            continue
        if element.kind is LinkKind.H:
            a, b = element.endpoints
            graph.add_edge(("J", a), ("J", b), key=element.id)
        elif element.kind is LinkKind.VT:
            far = ("S", element.source_id) if source_transit else ("V", element.id)
            graph.add_edge(("J", element.junction), far, key=element.id)
            alive_vt.append(element)
    return graph, alive_vt


def brute_force_oracle(net: LinkNetwork, original: int, sink_vb: str, *, source_transit: bool = False) -> FrozenSet[int]:
    """Direct connectivity search on the full network; no mapping, no reduction, no database."""
    check_scenario(original, net.element_count)
    position = net.position(sink_vb)
    if original >> position & 1:
        return frozenset()
    graph, alive_vt = _surviving_graph(net, original, source_transit)
    component = nx.node_connected_component(graph, ("J", net.elements[position].junction))
    return frozenset(int(e.source_id or 0) for e in alive_vt if ("J", e.junction) in component)


def oracle_sources(net: LinkNetwork, original: int, sink: int, *, source_transit: bool = False) -> FrozenSet[int]:
    connected: FrozenSet[int] = frozenset()
    for element in net.vb_elements(sink):
        connected |= brute_force_oracle(net, original, element.id, source_transit=source_transit)
    return connected


def oracle_all_sinks(net: LinkNetwork, original: int, *, source_transit: bool = False) -> Dict[int, FrozenSet[int]]:
    """Oracle answer for every sink from a single component labeling."""
    check_scenario(original, net.element_count)
    graph, alive_vt = _surviving_graph(net, original, source_transit)
    label: Dict[object, int] = {}
    for i, component in enumerate(nx.connected_components(graph)):
        for vertex in component:
            label[vertex] = i
    feeds: Dict[int, set] = {}
    for element in alive_vt:
        feeds.setdefault(label[("J", element.junction)], set()).add(int(element.source_id or 0))
    answer: Dict[int, FrozenSet[int]] = {sink: frozenset() for sink in net.sink_ids()}
    for bit, element in enumerate(net.elements):
        if element.kind is LinkKind.VB and not original >> bit & 1:
            reached = feeds.get(label[("J", element.junction)], set())
            answer[int(element.sink_id or 0)] = answer[int(element.sink_id or 0)] | frozenset(reached)
    return answer


def _availability_of(availability: Availability, element_id: str) -> float:
    if isinstance(availability, (int, float)):
        value = float(availability)
    else:
        if element_id not in availability:
            raise ProbabilityError(f"no availability given for element {element_id}")
        value = float(availability[element_id])
    if not 0.0 <= value <= 1.0:
        raise ProbabilityError(f"availability {value} of {element_id} outside [0, 1]")
    return value


def survivability_measure(
    net: LinkNetwork,
    mapping: MappingResult,
    dbs: Sequence[Optional[ScenarioDatabase]],
    availability: Availability,
    sink: int,
    *,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
) -> float:
    """Exact survival probability of ``sink`` under independent element failures.

    Availabilities are per original link element. A merged sub-topology
    element fails when any constituent fails.
    """
    available = [_availability_of(availability, e.id) for e in net.elements]
    entries = _sink_entries(mapping, sink)
    demand = net.demand(sink)
    capacities = net.capacities()

    if len(entries) == 1:
        entry = entries[0]
        db = _database_for(dbs, entry)
        fault = []
        for mask in entry.provenance_bits:
            up = 1.0
            for bit in range(net.element_count):
                if mask >> bit & 1:
                    up *= available[bit]
            fault.append(1.0 - up)
        index = np.arange(1 << db.m, dtype=np.uint64)
        probability = np.ones(1 << db.m, dtype=np.float64)
        for i, q in enumerate(fault):
            faulty = ((index >> np.uint64(i)) & np.uint64(1)).astype(bool)
            probability *= np.where(faulty, q, 1.0 - q)
        delivered = np.zeros(1 << db.m, dtype=np.float64)
        for cls, source in enumerate(entry.class_sources):
            connected = ((db.records >> np.uint64(cls)) & np.uint64(1)).astype(bool)
            delivered += np.where(connected, capacities[source], 0.0)
        intact = ((index >> np.uint64(db.vb_bit)) & np.uint64(1)) == 0
        meets = delivered >= demand - 1e-9 * max(1.0, abs(demand))
        return float(np.sum(probability[intact & meets]))

    # A sink on several VB links: enumerate the original elements its sub-topologies touch.
    touched = 0
    for entry in entries:
        for mask in entry.provenance_bits:
            touched |= mask
    bits = [b for b in range(net.element_count) if touched >> b & 1]
    if len(bits) > max_elements:
        raise DatabaseLimitError(len(bits), max_elements)
    total = 0.0
    for combo in range(1 << len(bits)):
        original = 0
        weight = 1.0
        for i, bit in enumerate(bits):
            if combo >> i & 1:
                original |= 1 << bit
                weight *= 1.0 - available[bit]
            else:
                weight *= available[bit]
        if weight and query_survivability(net, mapping, dbs, original, sink).survives:
            total += weight
    return total


def oracle_measure(net: LinkNetwork, availability: Availability, sink: int, *, source_transit: bool = False) -> float:
    """Survival probability by brute force over the whole original scenario space."""
    available = [_availability_of(availability, e.id) for e in net.elements]
    capacities = net.capacities()
    demand = net.demand(sink)
    vb_mask = net.mask_of(e.id for e in net.vb_elements(sink))
    total = 0.0
    for original in range(net.scenario_count):
        weight = 1.0
        for bit, up in enumerate(available):
            weight *= (1.0 - up) if original >> bit & 1 else up
        if not weight or original & vb_mask == vb_mask:
            continue
        connected = oracle_sources(net, original, sink, source_transit=source_transit)
        if _meets(sum(capacities[s] for s in connected), demand):
            total += weight
    return total


# ----------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexitySummary:
    m: int
    space: int
    sizes: Tuple[int, ...]
    total: int

    @property
    def ratio(self) -> float:
        return self.space / self.total if self.total else float("inf")

    def format_line(self) -> str:
        return f"M={self.m}  2^M={self.space}  subs={len(self.sizes)}  sum={self.total}  ratio={self.ratio:.2f}"


def complexity_report(net: LinkNetwork, mapping: MappingResult) -> ComplexitySummary:
    sizes = tuple(sub.m for sub in mapping.subs)
    return ComplexitySummary(
        m=net.element_count,
        space=net.scenario_count,
        sizes=sizes,
        total=sum(1 << m for m in sizes),
    )


@dataclass(frozen=True)
class SinkReport:
    sink_id: int
    demand: float
    fault_free_capacity: float
    verdicts: Tuple[Verdict, ...] = ()
    probability: Optional[float] = None

    @property
    def margin(self) -> float:
        return self.fault_free_capacity - self.demand


@dataclass(frozen=True)
class SurvivabilityReport:
    sinks: Tuple[SinkReport, ...]
    complexity: ComplexitySummary


def survivability_report(
    net: LinkNetwork,
    mapping: MappingResult,
    dbs: Sequence[Optional[ScenarioDatabase]],
    *,
    scenarios: Sequence[int] = (),
    availability: Optional[Availability] = None,
    sinks: Optional[Sequence[int]] = None,
    max_elements: int = DEFAULT_MAX_ELEMENTS,
) -> SurvivabilityReport:
    rows = []
    for sink in sinks or mapping.sink_ids():
        fault_free = query_survivability(net, mapping, dbs, 0, sink)
        verdicts = tuple(query_survivability(net, mapping, dbs, s, sink) for s in scenarios)
        probability = None
        if availability is not None:
            probability = survivability_measure(net, mapping, dbs, availability, sink, max_elements=max_elements)
        rows.append(SinkReport(
            sink_id=sink,
            demand=fault_free.demand,
            fault_free_capacity=fault_free.delivered,
            verdicts=verdicts,
            probability=probability,
        ))
    return SurvivabilityReport(sinks=tuple(rows), complexity=complexity_report(net, mapping))


# ----------------------------------------------------------------------
# Verification
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Mismatch:
    scenario: int
    sink_id: int
    expected: FrozenSet[int]
    actual: FrozenSet[int]


@dataclass(frozen=True)
class VerificationResult:
    scenario_count: int
    sink_count: int
    mismatches: Tuple[Mismatch, ...]
    sampled: bool = False

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def summary(self) -> str:
        label = "sampled scenarios" if self.sampled else "scenarios"
        if self.ok:
            return f"{self.scenario_count} {label} x {self.sink_count} sinks: all match"
        return f"{self.scenario_count} {label} x {self.sink_count} sinks: {len(self.mismatches)} mismatches"


def verify_mapping(
    net: LinkNetwork,
    mapping: MappingResult,
    dbs: Sequence[Optional[ScenarioDatabase]],
    *,
    max_elements: int = 16,
    sample_size: int = 20000,
    seed: int = 2012,
) -> VerificationResult:
    """Compare every lookup answer with the brute-force oracle."""
    sinks = mapping.sink_ids()
    sampled = net.element_count > max_elements
    if sampled:
        rng = np.random.default_rng(seed)
        width = (net.element_count + 7) // 8
        scenarios: Iterable[int] = (
            int.from_bytes(rng.bytes(width), "little") & (net.scenario_count - 1) for _ in range(sample_size)
        )
        count = sample_size
    else:
        scenarios = range(net.scenario_count)
        count = net.scenario_count
    mismatches = []
    for original in scenarios:
        oracle = oracle_all_sinks(net, original, source_transit=mapping.source_transit)
        for sink in sinks:
            actual = query_survivability(net, mapping, dbs, original, sink).connected
            expected = oracle[sink]
            if actual != expected:
                mismatches.append(Mismatch(original, sink, expected, actual))
    if mismatches:
        logger.warning("%d lookup answers disagree with the oracle", len(mismatches))
    return VerificationResult(scenario_count=count, sink_count=len(sinks), mismatches=tuple(mismatches), sampled=sampled)
