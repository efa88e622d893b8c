"""Exception hierarchy shared by every survnet module."""

from __future__ import annotations

from typing import Iterable, List, Optional


class SurvnetError(Exception):
    """Base class for data errors; the CLI maps these to exit status 2."""


class ConfigError(SurvnetError):
    pass


class NetworkFileError(SurvnetError):
    """Syntax or grammar problem in a network file."""

    def __init__(self, message: str, *, line: Optional[int] = None, column: Optional[int] = None) -> None:
        self.line = line
        self.column = column
        location = ""
        if line is not None:
            location = f"line {line}"
            if column is not None:
                location += f", column {column}"
            location += ": "
        super().__init__(f"{location}{message}")


class NetworkValidationError(SurvnetError):
    """One or more RawNetwork invariants do not hold."""

    def __init__(self, problems: Iterable[str], *, offending_ids: Iterable[object] = ()) -> None:
        self.problems: List[str] = list(problems)
        self.offending_ids: List[object] = list(offending_ids)
        super().__init__("; ".join(self.problems))


class LinkModelError(SurvnetError):
    """The raw network cannot be expressed with VT/VB/H links."""


class ExtractionError(SurvnetError):
    pass


class DatabaseLimitError(SurvnetError):
    def __init__(self, m: int, limit: int) -> None:
        self.m = m
        self.limit = limit
        self.required_bytes = (1 << m) * 8
        super().__init__(
            f"sub-topology has m={m} elements (limit {limit}); a database would need "
            f"{self.required_bytes} bytes. Decompose the network further."
        )


class DatabaseFormatError(SurvnetError):
    pass


class MissingDatabaseError(SurvnetError):
    pass


class ProbabilityError(SurvnetError):
    pass
