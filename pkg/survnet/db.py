"""SQLAlchemy model and engine/session helpers for the scenario-database catalog.

Every database written by ``builddb`` gets one ``ScenarioDatabaseEntry`` row so
later commands can find the file for a canonical key and check its bytes.
The catalog lives in ``<output dir>/catalog.sqlite`` unless ``SURVNET_DB_URL``
points elsewhere.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Dict, Optional, Union

from sqlalchemy import Boolean, Column, Integer, String, Text, UniqueConstraint, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

logger = logging.getLogger("survnet.db")

Base = declarative_base()

DEFAULT_CATALOG_FILENAME = "catalog.sqlite"


class ScenarioDatabaseEntry(Base):
    """One scenario database file and the sub-topology it answers for."""

    __tablename__ = "scenario_databases"
    __table_args__ = (UniqueConstraint("network", "key_digest", name="uq_network_key"),)

    id = Column(Integer, primary_key=True)
    network = Column(String, nullable=False)
    key_digest = Column(String(16), nullable=False)
    canonical_key = Column(Text, nullable=False)
    sub_index = Column(Integer, nullable=False)
    m = Column(Integer, nullable=False)
    class_count = Column(Integer, nullable=False)
    file_name = Column(String, nullable=False)
    sha256 = Column(String(64), nullable=False)
    mode = Column(String, nullable=False)
    source_transit = Column(Boolean, nullable=False, default=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            "network": self.network,
            "key_digest": self.key_digest,
            "sub_index": self.sub_index,
            "m": self.m,
            "class_count": self.class_count,
            "file_name": self.file_name,
            "sha256": self.sha256,
            "mode": self.mode,
            "source_transit": bool(self.source_transit),
        }

    def __repr__(self) -> str:  # pragma: no cover - debug helper
        return f"ScenarioDatabaseEntry(network={self.network!r}, key={self.key_digest!r}, m={self.m!r})"


def get_db_url(directory: Union[str, Path, None] = None, filename: str = DEFAULT_CATALOG_FILENAME) -> str:
    url = os.getenv("SURVNET_DB_URL")
    if url:
        return url
    base = Path(directory) if directory is not None else Path.cwd()
    return f"sqlite:///{(base / filename).resolve()}"


_ENGINES: Dict[str, Engine] = {}
_SESSION_FACTORIES: Dict[str, sessionmaker] = {}


def get_engine(url: Optional[str] = None) -> Engine:
    url = url or get_db_url()
    if url not in _ENGINES:
        logger.debug("Opening catalog at %s", url)
        _ENGINES[url] = create_engine(url, future=True)
    return _ENGINES[url]


def get_session_factory(url: Optional[str] = None) -> sessionmaker:
    url = url or get_db_url()
    if url not in _SESSION_FACTORIES:
        _SESSION_FACTORIES[url] = sessionmaker(bind=get_engine(url), autoflush=False, autocommit=False, future=True)
    return _SESSION_FACTORIES[url]


def init_db(url: Optional[str] = None) -> None:
    """Create tables if they do not exist yet."""
    Base.metadata.create_all(get_engine(url))


def dispose_engines() -> None:
    for engine in _ENGINES.values():
        engine.dispose()
    _ENGINES.clear()
    _SESSION_FACTORIES.clear()
