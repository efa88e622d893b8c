"""Shared fixtures: bundled networks, their link networks, mappings and databases."""

import logging
from pathlib import Path

import pytest

import survnet
from survnet.db import dispose_engines
from survnet.services.link_model import merge_parallel, to_link_network, validate_raw
from survnet.services.network_io import load_network, parse_network_text
from survnet.services.reduction import EquivalenceMode, map_network
from survnet.services.scenario_engine import build_databases

DATA_DIR = Path(survnet.__file__).resolve().parent / "data"


def net_from_text(text):
    """Validated, parallel-merged network from inline file text."""
    return merge_parallel(validate_raw(parse_network_text(text)))


@pytest.fixture
def build_net():
    return net_from_text


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    for name in ("SURVNET_ENV", "SURVNET_THREADS", "SURVNET_DB_URL"):
        monkeypatch.delenv(name, raising=False)
    yield
    dispose_engines()
    logging.getLogger("survnet").setLevel(logging.NOTSET)


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def fig1_raw():
    return load_network(DATA_DIR / "fig1.net")


@pytest.fixture(scope="session")
def fig1_net(fig1_raw):
    return to_link_network(fig1_raw)


@pytest.fixture(scope="session")
def fig1_mapping(fig1_net):
    return map_network(fig1_net, EquivalenceMode.STRUCTURAL)


@pytest.fixture(scope="session")
def fig1_labeled_mapping(fig1_net):
    return map_network(fig1_net, EquivalenceMode.LABELED)


@pytest.fixture(scope="session")
def fig1_dbs(fig1_mapping):
    return build_databases(fig1_mapping, threads=1)


@pytest.fixture(scope="session")
def twogroup_raw():
    return load_network(DATA_DIR / "twogroup.net")


@pytest.fixture(scope="session")
def ship32_net():
    return to_link_network(load_network(DATA_DIR / "ship32.net"))


@pytest.fixture
def double_fed_load():
    """Load 9 hangs off both buses; each bus has its own generator."""
    return net_from_text(
        """
        net doublefed
        node 1 sub
        node 2 sub
        node 5 gen 60
        node 6 gen 40
        node 9 load 50
        edge 1 1 2
        edge 2 5 1
        edge 3 6 2
        edge 4 9 1
        edge 5 9 2
        """
    )
