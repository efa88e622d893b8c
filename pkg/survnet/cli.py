"""Command-line entry point: ``python -m survnet <command> <network file> [options]``.

Exit status: 0 success, 1 usage error, 2 data error, 3 verification mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from survnet import __version__, configure_logging
from survnet.configs import SettingsRepo
from survnet.errors import ConfigError, ProbabilityError, SurvnetError
from survnet.services.catalog import CatalogService, write_databases
from survnet.services.grouping import format_group_export, format_group_table, format_id_set, group_table
from survnet.services.link_model import LinkNetwork, ValidatedRawNetwork, to_link_network
from survnet.services.network_io import format_link_listing, format_mapping_manifest, load_network, render_dot
from survnet.services.random_networks import random_corpus
from survnet.services.reduction import EquivalenceMode, MappingResult, map_network
from survnet.services.scenario_engine import (
    Availability,
    ScenarioDatabase,
    build_databases,
    complexity_report,
    query_survivability,
    survivability_report,
    verify_mapping,
)

logger = logging.getLogger("survnet.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MISMATCH = 3

COMMANDS = ("transform", "groups", "map", "builddb", "query", "analyze", "report", "verify")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


# ----------------------------------------------------------------------
# Run configuration
# ----------------------------------------------------------------------

def parse_availability(value: str) -> Availability:
    """A uniform probability, or a file of ``<element-id> <availability>`` lines."""
    try:
        uniform = float(value)
    except ValueError:
        pass
    else:
        if not 0.0 <= uniform <= 1.0:
            raise ProbabilityError(f"availability {uniform} outside [0, 1]")
        return uniform

    path = Path(value)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProbabilityError(f"cannot read availability file {path}: {exc.strerror or exc}") from None
    table: Dict[str, float] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        tokens = line.split("#", 1)[0].split()
        if not tokens:
            continue
        if len(tokens) != 2:
            raise ProbabilityError(f"{path.name} line {line_no}: expected '<element-id> <availability>'")
        try:
            probability = float(tokens[1])
        except ValueError:
            raise ProbabilityError(f"{path.name} line {line_no}: {tokens[1]!r} is not a number") from None
        if not 0.0 <= probability <= 1.0:
            raise ProbabilityError(f"{path.name} line {line_no}: availability {probability} outside [0, 1]")
        table[tokens[0]] = probability
    return table


def _mode(value: object) -> EquivalenceMode:
    try:
        return EquivalenceMode(value)
    except ValueError:
        raise ConfigError(f"unknown mapping mode {value!r}") from None


@dataclass(frozen=True)
class RunConfig:
    input_path: Path
    command: str
    mode: EquivalenceMode = EquivalenceMode.STRUCTURAL
    source_transit: bool = False
    availability: Optional[Availability] = None
    output_dir: Path = Path("survnet-out")
    sinks: Tuple[int, ...] = ()
    faults: Tuple[str, ...] = ()
    normalize: bool = False
    db_dir: Optional[Path] = None
    export: bool = False
    csv: bool = False
    random: int = 0
    threads: int = 0
    max_elements: int = 30
    chunk_size: int = 4096
    verify_max_elements: int = 16
    sample_size: int = 20000
    random_max_elements: int = 14
    seed: int = 2012
    catalog_filename: str = "catalog.sqlite"

    @classmethod
    def from_args(cls, args: argparse.Namespace, settings: SettingsRepo) -> "RunConfig":
        def pick(flag: object, *keys: str, default: object) -> object:
            return flag if flag is not None else settings.get_setting(*keys, default=default)

        availability = parse_availability(args.availability) if args.availability is not None else None
        faults: List[str] = []
        for chunk in args.faults or []:
            faults.extend(f for f in chunk.replace(",", " ").split() if f)
        return cls(
            input_path=Path(args.network),
            command=args.command,
            mode=_mode(pick(args.mode, "mapping", "mode", default="structural")),
            source_transit=bool(pick(args.source_transit, "mapping", "source_transit", default=False)),
            availability=availability,
            output_dir=Path(pick(args.out, "output", "directory", default="survnet-out")),  # type: ignore[arg-type]
            sinks=tuple(args.sink or ()),
            faults=tuple(faults),
            normalize=bool(args.normalize or settings.get_setting("output", "normalize_weights", default=False)),
            db_dir=Path(args.db_dir) if args.db_dir else None,
            export=bool(args.export),
            csv=bool(args.csv),
            random=int(args.random or 0),
            threads=args.threads if args.threads is not None else settings.threads(),
            max_elements=int(pick(args.max_elements, "scenario", "max_elements", default=30)),  # type: ignore[arg-type]
            chunk_size=int(settings.get_setting("scenario", "chunk_size", default=4096)),
            verify_max_elements=int(settings.get_setting("verify", "max_elements", default=16)),
            sample_size=int(settings.get_setting("verify", "sample_size", default=20000)),
            random_max_elements=int(settings.get_setting("verify", "random_max_elements", default=14)),
            seed=int(settings.get_setting("verify", "seed", default=2012)),
            catalog_filename=str(settings.get_setting("catalog", "filename", default="catalog.sqlite")),
        )


# ----------------------------------------------------------------------
# Shared pipeline steps
# ----------------------------------------------------------------------

@dataclass
class _Pipeline:
    cfg: RunConfig
    raw: ValidatedRawNetwork = field(init=False)
    net: LinkNetwork = field(init=False)

    def __post_init__(self) -> None:
        self.raw = load_network(self.cfg.input_path)
        self.net = to_link_network(self.raw)
        self._mapping: Optional[MappingResult] = None

    @property
    def mapping(self) -> MappingResult:
        if self._mapping is None:
            self._mapping = map_network(self.net, self.cfg.mode, source_transit=self.cfg.source_transit)
        return self._mapping

    def databases(self) -> List[ScenarioDatabase]:
        if self.cfg.db_dir is not None:
            catalog = CatalogService(self.cfg.db_dir, filename=self.cfg.catalog_filename)
            return catalog.load_all(self.net.name, self.mapping)
        return build_databases(
            self.mapping,
            max_elements=self.cfg.max_elements,
            threads=self.cfg.threads,
            chunk_size=self.cfg.chunk_size,
        )

    def sinks(self) -> List[int]:
        known = self.mapping.sink_ids()
        if not self.cfg.sinks:
            return known
        unknown = [s for s in self.cfg.sinks if s not in known]
        if unknown:
            raise SurvnetError(f"unknown sink(s): {', '.join(str(s) for s in unknown)}")
        return list(self.cfg.sinks)


def _emit(lines: Sequence[str]) -> None:
    for line in lines:
        print(line)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def _number(value: float) -> str:
    return format(value, "g")


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_transform(cfg: RunConfig) -> int:
    pipeline = _Pipeline(cfg)
    _emit(format_link_listing(pipeline.net, normalize=cfg.normalize))
    _write(cfg.output_dir / f"{pipeline.net.name}.dot", render_dot(pipeline.net))
    return EXIT_OK


def cmd_groups(cfg: RunConfig) -> int:
    raw = load_network(cfg.input_path)
    decomposition, rows = group_table(raw, source_transit=cfg.source_transit)
    _emit(format_group_export(decomposition, rows) if cfg.export else format_group_table(rows))
    return EXIT_OK


def cmd_map(cfg: RunConfig) -> int:
    pipeline = _Pipeline(cfg)
    manifest = format_mapping_manifest(pipeline.mapping)
    _emit(manifest)
    name = pipeline.net.name
    _write(cfg.output_dir / f"{name}.map.txt", "\n".join(manifest) + "\n")
    for index, sub in enumerate(pipeline.mapping.subs):
        _write(cfg.output_dir / f"{name}.sub{index}.dot", render_dot(sub.network, label=f"sub {index} ({sub.sink_vb})"))
    return EXIT_OK


def cmd_builddb(cfg: RunConfig) -> int:
    pipeline = _Pipeline(cfg)
    dbs = build_databases(
        pipeline.mapping, max_elements=cfg.max_elements, threads=cfg.threads, chunk_size=cfg.chunk_size
    )
    catalog = CatalogService(cfg.output_dir, filename=cfg.catalog_filename)
    paths = write_databases(cfg.output_dir, pipeline.net.name, pipeline.mapping, dbs, catalog=catalog, csv=cfg.csv)
    for index, (db, path) in enumerate(zip(dbs, paths)):
        print(f"sub {index}: m={db.m} records={len(db.records)} -> {path.name}")
    return EXIT_OK


def cmd_query(cfg: RunConfig) -> int:
    pipeline = _Pipeline(cfg)
    scenario = pipeline.net.mask_of(cfg.faults)
    dbs = pipeline.databases()
    for sink in pipeline.sinks():
        verdict = query_survivability(pipeline.net, pipeline.mapping, dbs, scenario, sink)
        print(
            f"sink {sink}: {'survives' if verdict.survives else 'fails'} "
            f"connected={format_id_set(verdict.connected)} "
            f"delivered={_number(verdict.delivered)} demand={_number(verdict.demand)}"
        )
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    if cfg.availability is None:
        raise UsageError("analyze needs --availability")
    pipeline = _Pipeline(cfg)
    report = survivability_report(
        pipeline.net,
        pipeline.mapping,
        pipeline.databases(),
        scenarios=[pipeline.net.mask_of(cfg.faults)] if cfg.faults else (),
        availability=cfg.availability,
        sinks=pipeline.sinks(),
        max_elements=cfg.max_elements,
    )
    scale = pipeline.net.total_demand() if cfg.normalize and pipeline.net.total_demand() > 0 else 1.0
    for row in report.sinks:
        line = (
            f"sink {row.sink_id}: demand={_number(row.demand / scale)} "
            f"capacity={_number(row.fault_free_capacity / scale)} margin={_number(row.margin / scale)} "
            f"p_survive={row.probability:.12g}"
        )
        for verdict in row.verdicts:
            line += f" faults={'survives' if verdict.survives else 'fails'}"
        print(line)
    print(report.complexity.format_line())
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    pipeline = _Pipeline(cfg)
    print(complexity_report(pipeline.net, pipeline.mapping).format_line())
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    pipeline = _Pipeline(cfg)
    result = verify_mapping(
        pipeline.net,
        pipeline.mapping,
        pipeline.databases(),
        max_elements=cfg.verify_max_elements,
        sample_size=cfg.sample_size,
        seed=cfg.seed,
    )
    print(result.summary())
    for mismatch in result.mismatches[:10]:
        print(
            f"  scenario {mismatch.scenario} sink {mismatch.sink_id}: "
            f"oracle={format_id_set(mismatch.expected)} lookup={format_id_set(mismatch.actual)}"
        )
    failed = not result.ok

    if cfg.random:
        bad = 0
        for raw in random_corpus(cfg.random, seed=cfg.seed, max_elements=cfg.random_max_elements):
            net = to_link_network(raw)
            mapping = map_network(net, cfg.mode, source_transit=cfg.source_transit)
            dbs = build_databases(mapping, max_elements=cfg.max_elements, threads=1, chunk_size=cfg.chunk_size)
            outcome = verify_mapping(net, mapping, dbs, max_elements=cfg.random_max_elements, seed=cfg.seed)
            if not outcome.ok:
                bad += 1
                logger.error("%s: %s", raw.name, outcome.summary())
        print(f"{cfg.random} random networks: {'all match' if not bad else f'{bad} with mismatches'}")
        failed = failed or bad > 0
    return EXIT_MISMATCH if failed else EXIT_OK


HANDLERS = {
    "transform": cmd_transform,
    "groups": cmd_groups,
    "map": cmd_map,
    "builddb": cmd_builddb,
    "query": cmd_query,
    "analyze": cmd_analyze,
    "report": cmd_report,
    "verify": cmd_verify,
}


def run_command(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survnet", description="Exact survivability analysis of source/sink networks")
    parser.add_argument("-v", "--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS, help="pipeline stage to run")
    parser.add_argument("network", help="network file")
    parser.add_argument("--mode", choices=[m.value for m in EquivalenceMode], help="sub-topology equivalence")
    parser.add_argument("--source-transit", dest="source_transit", action=argparse.BooleanOptionalAction,
                        default=None, help="let connectivity pass through a generator with several links")
    parser.add_argument("--availability", help="uniform availability in [0,1] or a per-element file")
    parser.add_argument("-o", "--out", help="output directory")
    parser.add_argument("--db-dir", dest="db_dir", help="read databases written by builddb from this directory")
    parser.add_argument("--sink", type=int, action="append", help="restrict to this sink (repeatable)")
    parser.add_argument("--faults", action="append", help="faulty element ids, comma separated")
    parser.add_argument("--normalize", action="store_true", help="divide weights by total demand")
    parser.add_argument("--export", action="store_true", help="machine-readable groups output")
    parser.add_argument("--csv", action="store_true", help="also write a CSV dump of every database")
    parser.add_argument("--random", type=int, nargs="?", const=-1, default=None,
                        help="also verify N seeded random networks")
    parser.add_argument("--threads", type=int, help="worker processes for builddb (0 = one per CPU)")
    parser.add_argument("--max-elements", dest="max_elements", type=int, help="largest sub-topology to enumerate")
    level = parser.add_mutually_exclusive_group()
    level.add_argument("-d", "--debug", action="store_true", help="enable debug output")
    level.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    return parser


def _resolve_random(args: argparse.Namespace, settings: SettingsRepo) -> None:
    if args.random == -1:
        args.random = int(settings.get_setting("verify", "random_networks", default=100))


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(logging.DEBUG if args.debug else logging.ERROR if args.quiet else logging.WARNING)
    settings = SettingsRepo()
    _resolve_random(args, settings)
    try:
        cfg = RunConfig.from_args(args, settings)
        return run_command(cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SurvnetError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
