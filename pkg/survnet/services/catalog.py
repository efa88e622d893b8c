"""Catalog service: record written scenario databases and find them again."""

from __future__ import annotations

import hashlib
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Generator, List, Optional, Sequence, Union

from sqlalchemy import delete, select
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session

from survnet.db import ScenarioDatabaseEntry, get_db_url, get_session_factory, init_db
from survnet.errors import DatabaseFormatError, MissingDatabaseError, SurvnetError
from survnet.services.reduction import MappingResult, key_digest
from survnet.services.scenario_engine import ScenarioDatabase, database_from_bytes

logger = logging.getLogger("survnet.catalog")


def database_file_name(network: str, sub_index: int, digest: str) -> str:
    return f"{network}.sub{sub_index}.{digest}.svdb"


class CatalogService:
    """Scenario databases of one output directory, indexed by canonical key digest."""

    def __init__(self, directory: Union[str, Path], *, filename: str = "catalog.sqlite", url: Optional[str] = None) -> None:
        self.directory = Path(directory)
        self.url = url or get_db_url(self.directory, filename)
        try:
            init_db(self.url)
        except SQLAlchemyError as exc:
            raise SurvnetError(f"cannot open catalog {self.url}: {exc}") from None
        self._session_factory = get_session_factory(self.url)

    @contextmanager
    def session(self) -> Generator[Session, None, None]:
        session = self._session_factory()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def register(
        self, network: str, mapping: MappingResult, sub_index: int, db: ScenarioDatabase, path: Path
    ) -> ScenarioDatabaseEntry:
        sub = mapping.subs[sub_index]
        digest = key_digest(sub.canonical_key)
        entry = ScenarioDatabaseEntry(
            network=network,
            key_digest=digest,
            canonical_key=sub.canonical_key.decode("utf-8"),
            sub_index=sub_index,
            m=db.m,
            class_count=db.class_count,
            file_name=path.name,
            sha256=hashlib.sha256(path.read_bytes()).hexdigest(),
            mode=mapping.mode.value,
            source_transit=mapping.source_transit,
        )
        with self.session() as session:
            session.execute(
                delete(ScenarioDatabaseEntry).where(
                    ScenarioDatabaseEntry.network == network,
                    ScenarioDatabaseEntry.key_digest == digest,
                )
            )
            session.add(entry)
        logger.debug("Registered %s for %s sub %d", path.name, network, sub_index)
        return entry

    def entries(self, network: Optional[str] = None) -> List[ScenarioDatabaseEntry]:
        stmt = select(ScenarioDatabaseEntry).order_by(ScenarioDatabaseEntry.network, ScenarioDatabaseEntry.sub_index)
        if network is not None:
            stmt = stmt.where(ScenarioDatabaseEntry.network == network)
        with self.session() as session:
            rows = session.execute(stmt).scalars().all()
            session.expunge_all()
            return list(rows)

    def lookup(self, network: str, canonical_key: bytes) -> ScenarioDatabaseEntry:
        digest = key_digest(canonical_key)
        stmt = select(ScenarioDatabaseEntry).where(
            ScenarioDatabaseEntry.network == network,
            ScenarioDatabaseEntry.key_digest == digest,
        )
        with self.session() as session:
            row = session.execute(stmt).scalars().first()
            if row is None:
                raise MissingDatabaseError(f"catalog has no database for {network} key {digest}")
            session.expunge(row)
        if row.canonical_key.encode("utf-8") != canonical_key:
            raise DatabaseFormatError(f"catalog key for {digest} does not match the mapped sub-topology")
        return row

    def load(self, network: str, canonical_key: bytes) -> ScenarioDatabase:
        row = self.lookup(network, canonical_key)
        path = self.directory / row.file_name
        if not path.exists():
            raise MissingDatabaseError(f"database file {path} listed in the catalog is missing")
        payload = path.read_bytes()
        if hashlib.sha256(payload).hexdigest() != row.sha256:
            raise DatabaseFormatError(f"{path.name} does not match its catalog digest")
        db = database_from_bytes(payload, canonical_key)
        if db.m != row.m or db.class_count != row.class_count:
            raise DatabaseFormatError(f"{path.name} header disagrees with the catalog")
        return db

    def load_all(self, network: str, mapping: MappingResult) -> List[ScenarioDatabase]:
        return [self.load(network, sub.canonical_key) for sub in mapping.subs]


def write_databases(
    directory: Union[str, Path],
    network: str,
    mapping: MappingResult,
    dbs: Sequence[ScenarioDatabase],
    *,
    catalog: Optional[CatalogService] = None,
    csv: bool = False,
) -> List[Path]:
    """Write one SVDB file per sub-topology and register each in the catalog."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, (sub, db) in enumerate(zip(mapping.subs, dbs)):
        path = db.write(directory / database_file_name(network, index, sub.key_digest()))
        if csv:
            db.write_csv(path.with_suffix(".csv"))
        if catalog is not None:
            catalog.register(network, mapping, index, db, path)
        paths.append(path)
    return paths
