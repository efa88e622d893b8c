"""Exact survivability analysis for source/sink networks.

The pipeline turns a node/edge grid into its links-only form, maps it onto
per-sink single-link sub-topologies, enumerates every fault scenario of each
sub-topology into a database, and answers fault queries by lookup.
"""

from __future__ import annotations

import logging
import sys

__version__ = "0.3.0"

_LEVEL_TAGS = {
    logging.DEBUG: "DEBUG",
    logging.INFO: "INFO",
    logging.WARNING: "WARN",
    logging.ERROR: "ERROR",
    logging.CRITICAL: "ERROR",
}


class _TagFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        tag = _LEVEL_TAGS.get(record.levelno, record.levelname)
        return f"[{tag}] {record.getMessage()}"


def configure_logging(level: int = logging.WARNING) -> logging.Logger:
    """Route the ``survnet`` logger to stderr with bracketed level tags."""
    logger = logging.getLogger("survnet")
    for handler in list(logger.handlers):
        if getattr(handler, "_survnet", False):
            logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_TagFormatter())
    handler._survnet = True  # type: ignore[attr-defined]
    logger.addHandler(handler)
    logger.setLevel(level)
    return logger
