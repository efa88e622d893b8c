import pytest

from survnet.errors import NetworkFileError
from survnet.services.link_model import NodeKind
from survnet.services.network_io import (
    dump_network,
    format_link_listing,
    format_mapping_manifest,
    load_network,
    parse_network_file,
    parse_network_text,
    render_dot,
)


def test_parse_fig1(data_dir):
    raw = parse_network_file(data_dir / "fig1.net")
    assert raw.name == "fig1"
    assert len(raw.nodes) == 7
    assert len(raw.edges) == 7
    assert raw.nodes[0].kind is NodeKind.INTERCONNECTION_WITH_SINK
    assert raw.nodes[-1].capacity == 100.0


def test_comments_and_blank_lines_are_ignored():
    raw = parse_network_text("# header comment\n\nnet tiny  # trailing\nnode 1 gen 10\nnode 2 subload 5\nedge a 1 2\n")
    assert [n.id for n in raw.nodes] == [1, 2]
    assert raw.edges[0].id == "a"


def test_missing_capacity_reports_its_line():
    with pytest.raises(NetworkFileError, match="node 3 gen: missing capacity") as info:
        parse_network_text("net x\nnode 3 gen\n")
    assert info.value.line == 2
    assert str(info.value).startswith("line 2, column 8:")


def test_empty_input_has_no_header():
    with pytest.raises(NetworkFileError, match="no net header"):
        parse_network_text("")


def test_unknown_keyword_is_located():
    with pytest.raises(NetworkFileError, match="unknown keyword 'wire'") as info:
        parse_network_text("net x\nnode 1 sub\n  wire 1 2 3\n")
    assert (info.value.line, info.value.column) == (3, 3)


def test_duplicate_node_names_the_first_line():
    with pytest.raises(NetworkFileError, match=r"duplicate node id 1 \(first defined on line 2\)"):
        parse_network_text("net x\nnode 1 sub\nnode 1 gen 5\n")


@pytest.mark.parametrize(
    "line, message",
    [
        ("node 1 hub", "unknown node kind 'hub'"),
        ("node one sub", "node id must be an integer"),
        ("node 1 load ten", "demand must be a number"),
        ("node 1 sub 5", "unexpected trailing token"),
        ("edge 1 1 2 y3", "bad multiplicity 'y3'"),
        ("net y", "second net header"),
    ],
)
def test_grammar_errors(line, message):
    with pytest.raises(NetworkFileError, match=message):
        parse_network_text(f"net x\n{line}\n")


def test_unreadable_file(tmp_path):
    with pytest.raises(NetworkFileError, match="cannot read"):
        parse_network_file(tmp_path / "absent.net")


def test_dump_round_trips_fig1(data_dir):
    raw = parse_network_file(data_dir / "fig1.net")
    assert parse_network_text(dump_network(raw)) == raw


def test_multiplicity_survives_dump_and_merges_on_load(tmp_path):
    text = "net par\nnode 1 gen 10\nnode 2 subload 2.5\nedge 1 1 2 x3\n"
    raw = parse_network_text(text)
    assert raw.edges[0].multiplicity == 3
    assert dump_network(raw) == text
    path = tmp_path / "par.net"
    path.write_text(text)
    merged = load_network(path)
    assert [e.multiplicity for e in merged.edges] == [1]


def test_link_listing(fig1_net):
    lines = format_link_listing(fig1_net)
    assert lines[0] == "net fig1: M=10 VB=4 VT=4 H=2"
    assert lines[1] == "  0 VB20     VB at=20 weight=-40 provenance={n20}"
    assert lines[-1].startswith("  9 H2       H at=27-28")
    assert "weight" not in lines[-1]


def test_normalized_listing_divides_by_total_demand(fig1_net):
    lines = format_link_listing(fig1_net, normalize=True)
    assert "weight=-0.25" in lines[1]


def test_mapping_manifest(fig1_mapping):
    lines = format_mapping_manifest(fig1_mapping)
    assert lines[0] == "mode=structural transit=0 vb=4 subs=2"
    assert any(line.startswith("sub 1: m=6 classes=3") and line.endswith("serves=VB27,VB28,VB30") for line in lines)
    assert any(line.startswith("assign VB28 -> sub 1:") and "classes=[81,76,64]" in line for line in lines)


def test_render_dot(fig1_net):
    dot = render_dot(fig1_net, label="fig1 links")
    assert dot.startswith('graph "fig1" {')
    assert 'label="fig1 links"' in dot
    assert '"S76" -- "J27" [label="VT761"' in dot
    assert '"J27" -- "J28" [label="H2"]' in dot
    assert dot.count("shape=invtriangle") == 4
    assert dot.rstrip().endswith("}")
