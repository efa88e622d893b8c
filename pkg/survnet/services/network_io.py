"""Network file parsing and serialization plus the text and DOT renderings.

File grammar (one statement per line, ``#`` starts a comment)::

    net <name>
    node <id> gen <capacity>
    node <id> sub
    node <id> load <demand>
    node <id> subload <demand>
    edge <id> <nodeA> <nodeB> [x<multiplicity>]
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import jinja2

from survnet.errors import NetworkFileError
from survnet.services.link_model import (
    LinkKind,
    LinkNetwork,
    NodeKind,
    RawEdge,
    RawNetwork,
    RawNode,
    ValidatedRawNetwork,
    merge_parallel,
    validate_raw,
)
from survnet.services.reduction import MappingResult

logger = logging.getLogger("survnet.network_io")

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"
_TOKEN = re.compile(r"\S+")
_NODE_KINDS = {kind.value: kind for kind in NodeKind}
_WEIGHTED = {NodeKind.SOURCE, NodeKind.SINK, NodeKind.INTERCONNECTION_WITH_SINK}


def _tokens(line: str) -> List[Tuple[str, int]]:
    body = line.split("#", 1)[0]
    return [(m.group(0), m.start() + 1) for m in _TOKEN.finditer(body)]


def _int(token: str, column: int, line_no: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise NetworkFileError(f"{what} must be an integer, got {token!r}", line=line_no, column=column) from None


def _float(token: str, column: int, line_no: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise NetworkFileError(f"{what} must be a number, got {token!r}", line=line_no, column=column) from None


def parse_network_text(text: str) -> RawNetwork:
    name: Optional[str] = None
    nodes: List[RawNode] = []
    edges: List[RawEdge] = []
    node_lines: Dict[int, int] = {}
    edge_lines: Dict[str, int] = {}

    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = _tokens(line)
        if not tokens:
            continue
        keyword, column = tokens[0]

        if name is None:
            if keyword != "net":
                raise NetworkFileError("no net header", line=line_no, column=column)
            if len(tokens) != 2:
                raise NetworkFileError("expected 'net <name>'", line=line_no, column=column)
            name = tokens[1][0]
            continue

        if keyword == "net":
            raise NetworkFileError("second net header", line=line_no, column=column)

        if keyword == "node":
            if len(tokens) < 3:
                raise NetworkFileError("expected 'node <id> <kind> [value]'", line=line_no, column=column)
            node_id = _int(*tokens[1], line_no, "node id")
            kind_token, kind_column = tokens[2]
            kind = _NODE_KINDS.get(kind_token)
            if kind is None:
                raise NetworkFileError(f"unknown node kind {kind_token!r}", line=line_no, column=kind_column)
            if node_id in node_lines:
                raise NetworkFileError(
                    f"duplicate node id {node_id} (first defined on line {node_lines[node_id]})",
                    line=line_no, column=tokens[1][1],
                )
            expected = 4 if kind in _WEIGHTED else 3
            if len(tokens) < expected:
                what = "capacity" if kind is NodeKind.SOURCE else "demand"
                raise NetworkFileError(f"node {node_id} {kind_token}: missing {what}", line=line_no, column=kind_column)
            if len(tokens) > expected:
                raise NetworkFileError("unexpected trailing token", line=line_no, column=tokens[expected][1])
            capacity = demand = None
            if kind is NodeKind.SOURCE:
                capacity = _float(*tokens[3], line_no, "capacity")
            elif kind in _WEIGHTED:
                demand = _float(*tokens[3], line_no, "demand")
            node_lines[node_id] = line_no
            nodes.append(RawNode(id=node_id, kind=kind, capacity=capacity, demand=demand))
            continue

        if keyword == "edge":
            if len(tokens) not in (4, 5):
                raise NetworkFileError("expected 'edge <id> <nodeA> <nodeB> [x<k>]'", line=line_no, column=column)
            edge_id = tokens[1][0]
            if edge_id in edge_lines:
                raise NetworkFileError(
                    f"duplicate edge id {edge_id} (first defined on line {edge_lines[edge_id]})",
                    line=line_no, column=tokens[1][1],
                )
            a = _int(*tokens[2], line_no, "endpoint")
            b = _int(*tokens[3], line_no, "endpoint")
            multiplicity = 1
            if len(tokens) == 5:
                token, token_column = tokens[4]
                if not re.fullmatch(r"x[1-9][0-9]*", token):
                    raise NetworkFileError(f"bad multiplicity {token!r}", line=line_no, column=token_column)
                multiplicity = int(token[1:])
            edge_lines[edge_id] = line_no
            edges.append(RawEdge(id=edge_id, endpoints=(a, b), multiplicity=multiplicity))
            continue

        raise NetworkFileError(f"unknown keyword {keyword!r}", line=line_no, column=column)

    if name is None:
        raise NetworkFileError("no net header")
    return RawNetwork(name=name, nodes=tuple(nodes), edges=tuple(edges))


def parse_network_file(path: Union[str, Path]) -> RawNetwork:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise NetworkFileError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise NetworkFileError(f"{path} is not UTF-8 text") from None
    return parse_network_text(text)


def load_network(path: Union[str, Path]) -> ValidatedRawNetwork:
    """Parse, validate and merge parallel lines in one go."""
    net = merge_parallel(validate_raw(parse_network_file(path)))
    logger.debug("Loaded %s: %d nodes, %d merged edges", net.name, len(net.nodes), len(net.edges))
    return net


def _number(value: Optional[float]) -> str:
    value = float(value or 0.0)
    return str(int(value)) if value.is_integer() else repr(value)


def dump_network(net: RawNetwork) -> str:
    lines = [f"net {net.name}"]
    for node in net.nodes:
        if node.kind is NodeKind.SOURCE:
            lines.append(f"node {node.id} gen {_number(node.capacity)}")
        elif node.kind is NodeKind.INTERCONNECTION:
            lines.append(f"node {node.id} sub")
        else:
            lines.append(f"node {node.id} {node.kind.value} {_number(node.demand)}")
    for edge in net.edges:
        a, b = edge.endpoints
        suffix = f" x{edge.multiplicity}" if edge.multiplicity > 1 else ""
        lines.append(f"edge {edge.id} {a} {b}{suffix}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Listings
# ----------------------------------------------------------------------

def _scaled(value: Optional[float], scale: float) -> str:
    return format(float(value or 0.0) / scale, "g")


def format_link_listing(net: LinkNetwork, *, normalize: bool = False) -> List[str]:
    scale = net.total_demand() if normalize and net.total_demand() > 0 else 1.0
    counts = {kind: len(net.of_kind(kind)) for kind in LinkKind}
    lines = [
        f"net {net.name}: M={net.element_count} VB={counts[LinkKind.VB]} "
        f"VT={counts[LinkKind.VT]} H={counts[LinkKind.H]}"
    ]
    for bit, element in enumerate(net.elements):
        at = "-".join(str(j) for j in element.endpoints)
        weight = "" if element.kind is LinkKind.H else f" weight={_scaled(element.weight, scale)}"
        provenance = ",".join(sorted(element.provenance))
        lines.append(f"{bit:>3} {element.id:<8} {element.kind.value} at={at}{weight} provenance={{{provenance}}}")
    return lines


def format_mapping_manifest(mapping: MappingResult) -> List[str]:
    lines = [f"mode={mapping.mode.value} transit={int(mapping.source_transit)} vb={mapping.vb_count} subs={len(mapping.subs)}"]
    for index, sub in enumerate(mapping.subs):
        served = sorted(vb for vb, entry in mapping.assignment.items() if entry.sub_index == index)
        lines.append(
            f"sub {index}: m={sub.m} classes={len(sub.source_classes)} key={sub.key_digest()} "
            f"serves={','.join(served)}"
        )
        for element in sub.network.elements:
            origin = ",".join(sorted(sub.provenance_map.get(element.id, ())))
            lines.append(f"  {element.id} <- {{{origin}}}")
    for vb, entry in mapping.assignment.items():
        pairs = ",".join(
            f"{rep.id}={own}" for rep, own in zip(mapping.subs[entry.sub_index].network.elements, entry.element_bijection)
        )
        classes = ",".join(str(s) for s in entry.class_sources)
        lines.append(f"assign {vb} -> sub {entry.sub_index}: {pairs} classes=[{classes}]")
    return lines


# ----------------------------------------------------------------------
# DOT
# ----------------------------------------------------------------------

def _environment() -> jinja2.Environment:
    return jinja2.Environment(
        loader=jinja2.FileSystemLoader(str(TEMPLATES_DIR)),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
        autoescape=False,
    )


def render_dot(net: LinkNetwork, *, label: Optional[str] = None) -> str:
    capacities = net.capacities()
    elements = []
    for element in net.elements:
        row = {"id": element.id, "kind": element.kind.value, "near": element.endpoints[0]}
        if element.kind is LinkKind.VT:
            row["far"] = f"S{element.source_id}"
        elif element.kind is LinkKind.VB:
            row["sink"] = element.sink_id
            row["weight"] = _number(element.weight)
        else:
            row["far"] = element.endpoints[1]
        elements.append(row)
    template = _environment().get_template("network.dot.j2")
    return template.render(
        name=net.name,
        label=label,
        junctions=sorted(net.junctions),
        source_points=[{"id": s, "capacity": _number(c)} for s, c in sorted(capacities.items())],
        elements=elements,
    )
