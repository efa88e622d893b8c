"""Seeded random grids for cross-checking the mapping against the oracle."""

from __future__ import annotations

import logging
from typing import Iterator, List, Set, Tuple

import numpy as np

from survnet.services.link_model import (
    NodeKind,
    RawEdge,
    RawNetwork,
    RawNode,
    ValidatedRawNetwork,
    merge_parallel,
    to_link_network,
    validate_raw,
)

logger = logging.getLogger("survnet.random_networks")

CAPACITIES = (50.0, 100.0, 150.0)
DEMANDS = (20.0, 40.0, 80.0)


def _attach(rng: np.random.Generator, junctions: List[int]) -> List[int]:
    count = 1 if len(junctions) == 1 or rng.random() < 0.6 else 2
    return sorted(int(j) for j in rng.choice(junctions, size=count, replace=False))


def _draw(rng: np.random.Generator, name: str) -> RawNetwork:
    n_junctions = int(rng.integers(2, 6))
    junctions = list(range(1, n_junctions + 1))
    nodes: List[RawNode] = []
    for j in junctions:
        if j == 1 or rng.random() < 0.5:
            nodes.append(RawNode(id=j, kind=NodeKind.INTERCONNECTION_WITH_SINK, demand=float(rng.choice(DEMANDS))))
        else:
            nodes.append(RawNode(id=j, kind=NodeKind.INTERCONNECTION))

    pairs: Set[Tuple[int, int]] = set()
    for j in junctions[1:]:
        if rng.random() < 0.85:
            pairs.add((int(rng.integers(1, j)), j))
    for _ in range(int(rng.integers(0, 3))):
        a, b = sorted(int(x) for x in rng.choice(junctions, size=2, replace=False))
        pairs.add((a, b))

    edges: List[RawEdge] = []
    for a, b in sorted(pairs):
        edges.append(RawEdge(id=str(len(edges) + 1), endpoints=(a, b)))

    for k in range(int(rng.integers(1, 4))):
        gen = 10 + k
        nodes.append(RawNode(id=gen, kind=NodeKind.SOURCE, capacity=float(rng.choice(CAPACITIES))))
        for j in _attach(rng, junctions):
            edges.append(RawEdge(id=str(len(edges) + 1), endpoints=(gen, j)))

    for k in range(int(rng.integers(0, 3))):
        load = 20 + k
        nodes.append(RawNode(id=load, kind=NodeKind.SINK, demand=float(rng.choice(DEMANDS))))
        for j in _attach(rng, junctions):
            edges.append(RawEdge(id=str(len(edges) + 1), endpoints=(load, j)))

    return RawNetwork(name=name, nodes=tuple(nodes), edges=tuple(edges))


def random_network(seed: int, *, max_elements: int = 14, name: str = "") -> ValidatedRawNetwork:
    """A small valid grid whose link network has at most ``max_elements`` elements."""
    rng = np.random.default_rng(seed)
    label = name or f"random{seed}"
    while True:
        net = merge_parallel(validate_raw(_draw(rng, label)))
        if to_link_network(net).element_count <= max_elements:
            return net


def random_corpus(count: int, *, seed: int = 2012, max_elements: int = 14) -> Iterator[ValidatedRawNetwork]:
    for i in range(count):
        yield random_network(seed + i, max_elements=max_elements)
