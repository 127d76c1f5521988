"""Raw records and the tab-separated reader."""
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from optfusion.errors import InputError, ParseError


@dataclass(frozen=True)
class RawSchema:
    """Column layout of a raw file: label, numeric fields, categorical fields."""

    num_numeric: int
    num_categorical: int

    def __post_init__(self) -> None:
        if self.num_numeric < 0 or self.num_categorical < 0:
            raise ValueError("field counts must be non-negative")
        if self.num_fields < 1:
            raise ValueError("schema needs at least one field")

    @property
    def num_fields(self) -> int:
        return self.num_numeric + self.num_categorical

    @property
    def num_columns(self) -> int:
        return 1 + self.num_fields


CRITEO_SCHEMA = RawSchema(num_numeric=13, num_categorical=26)


@dataclass(frozen=True)
class RawRecord:
    label: int
    numeric_values: tuple[float | None, ...]
    categorical_values: tuple[str | None, ...]


def parse_line(
    line: str, schema: RawSchema, path: str = "", line_number: int = 0
) -> RawRecord:
    columns = line.rstrip("\r\n").split("\t")
    if len(columns) != schema.num_columns:
        raise ParseError(
            f"expected {schema.num_columns} columns, got {len(columns)}",
            path=path,
            line=line_number,
        )
    if columns[0] not in ("0", "1"):
        raise ParseError(f"label must be 0 or 1, got {columns[0]!r}", path, line_number)
    numeric: list[float | None] = []
    for column in columns[1 : 1 + schema.num_numeric]:
        if column == "":
            numeric.append(None)
            continue
        try:
            numeric.append(float(column))
        except ValueError:
            raise ParseError(f"not a number: {column!r}", path, line_number) from None
    categorical = tuple(
        column if column != "" else None for column in columns[1 + schema.num_numeric :]
    )
    return RawRecord(int(columns[0]), tuple(numeric), categorical)


def parse_tsv(
    path: str | Path, schema: RawSchema = CRITEO_SCHEMA
) -> Iterator[RawRecord]:
    """Stream records from a UTF-8, headerless, tab-separated file.

    Empty fields are missing values; a wrong column count aborts with the
    offending line number.
    """
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as error:
        raise InputError(f"cannot read {path}: {error.strerror}") from None
    with handle:
        for line_number, line in enumerate(handle, start=1):
            yield parse_line(line, schema, str(path), line_number)
