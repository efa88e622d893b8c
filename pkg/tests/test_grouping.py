import pytest

from survnet.errors import NetworkValidationError
from survnet.services.grouping import (
    decompose_groups,
    format_group_export,
    format_group_table,
    group_table,
    reachable_sources,
)
from survnet.services.link_model import NodeKind, to_link_network
from survnet.services.random_networks import random_corpus
from survnet.services.scenario_engine import oracle_sources


def test_fig1_is_one_group(fig1_raw):
    decomposition = decompose_groups(fig1_raw)
    (group,) = decomposition.groups
    assert group.sinks == (20, 27, 28, 30)
    assert group.generators == (64, 76, 81)
    assert decomposition.shared_generators == {}
    assert decomposition.orphans == ()


def test_fig1_group_table(fig1_raw):
    _, rows = group_table(fig1_raw)
    assert format_group_table(rows) == [
        "Group 1",
        "20: {64,76,81}",
        "27: {64,76,81}",
        "28: {64,76,81}",
        "30: {64,76,81}",
    ]
    assert not rows[0].differs


@pytest.mark.parametrize("sink", [20, 27, 28, 30])
def test_fig1_reachable_sources(fig1_raw, sink):
    assert reachable_sources(fig1_raw, sink) == {64, 76, 81}


def test_two_groups_share_a_generator(twogroup_raw):
    decomposition, rows = group_table(twogroup_raw)
    assert [(g.sinks, g.generators) for g in decomposition.groups] == [
        ((1, 2), (10, 12)),
        ((3, 4), (11, 12)),
    ]
    assert decomposition.shared_generators == {12: frozenset({1, 2})}
    assert format_group_export(decomposition, rows) == [
        "group 1: sinks={1,2} gens={10,12}",
        "sink 1: {10,12}",
        "sink 2: {10,12}",
        "group 2: sinks={3,4} gens={11,12}",
        "sink 3: {11,12}",
        "sink 4: {11,12}",
        "shared 12: groups={1,2}",
    ]


def test_shared_generator_does_not_join_groups(twogroup_raw):
    assert reachable_sources(twogroup_raw, 1) == {10, 12}
    assert reachable_sources(twogroup_raw, 4) == {11, 12}


def test_single_component(build_net):
    net = build_net(
        "net mesh\nnode 1 subload 5\nnode 2 subload 5\nnode 3 sub\nnode 9 gen 20\n"
        "edge 1 1 2\nedge 2 2 3\nedge 3 3 1\nedge 4 9 3\n"
    )
    (group,) = decompose_groups(net).groups
    assert group.sinks == (1, 2)
    assert group.members == (1, 2, 3)


def test_orphan_generator_is_reported(build_net, caplog):
    net = build_net("net lone\nnode 1 subload 5\nnode 2 gen 10\nnode 3 gen 10\nedge 1 2 1\n")
    decomposition = decompose_groups(net)
    assert decomposition.orphans == (3,)
    assert "Generator 3 is adjacent to no group" in caplog.text


def test_differing_sink_sets_are_flagged(build_net, caplog):
    # Load 5 bridges the two subloads but cannot carry power between them.
    net = build_net(
        "net bridge\nnode 1 subload 5\nnode 2 subload 5\nnode 5 load 5\nnode 10 gen 10\nnode 11 gen 10\n"
        "edge 1 10 1\nedge 2 11 2\nedge 3 5 1\nedge 4 5 2\n"
    )
    _, rows = group_table(net)
    (row,) = rows
    assert row.per_sink == {1: {10}, 2: {11}, 5: {10, 11}}
    assert row.differs
    assert "see different generator sets" in caplog.text


def test_unknown_or_non_sink_node(fig1_raw):
    with pytest.raises(NetworkValidationError):
        reachable_sources(fig1_raw, 99)
    with pytest.raises(NetworkValidationError, match="not a sink"):
        reachable_sources(fig1_raw, 64)


def test_groups_partition_sinks_and_match_the_full_network():
    for raw in random_corpus(40, seed=9000, max_elements=12):
        decomposition = decompose_groups(raw)
        grouped = sorted(s for g in decomposition.groups for s in g.sinks)
        assert grouped == sorted(n.id for n in raw.nodes if n.kind.is_sink_bearing)
        full = to_link_network(raw)
        for group in decomposition.groups:
            for sink in group.sinks:
                expected = oracle_sources(full, 0, sink) if full.vb_elements(sink) else frozenset()
                assert reachable_sources(raw, sink, decomposition=decomposition) == expected
                assert expected <= set(group.generators)
        assert all(n.kind is NodeKind.SOURCE for n in raw.nodes if n.id in decomposition.orphans)
