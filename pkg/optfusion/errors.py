"""Exception hierarchy for OptFusion.

Every error subclasses a built-in so callers can catch either the specific
type or the built-in one. The CLI maps them onto exit codes.
"""
from typing import Any


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class EmptyFusionError(ValueError):
    """A concatenation or fusion received no inputs."""


class DegenerateMaskError(ValueError):
    """Every logit of a softmax row is masked out."""


class ContractError(RuntimeError):
    """An API contract was violated by the caller."""


class ArchitectureSchemaError(ValueError):
    """An architecture descriptor or document is invalid."""

    def __init__(self, message: str, path: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class LevelConstraintError(ArchitectureSchemaError):
    """An edge does not point from a lower to a strictly higher level."""


class InputError(OSError):
    """An input file or dataset cannot be used."""


class ParseError(InputError):
    """A line of a raw data file is malformed."""

    def __init__(self, message: str, path: str = "", line: int = 0) -> None:
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, snapshot: dict[str, Any] | None = None) -> None:
        self.snapshot = snapshot if snapshot is not None else {}
        super().__init__(message)


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given labels."""
