"""Numeric discretisation, per-dataset transforms and vocabularies."""
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from .records import RawRecord

MISSING_TOKEN = "MISS"
OOV_INDEX = 0
MIN_VOCAB_SIZE = 2

LogBase = Literal["e", "2"]


def discretize_numeric(x: float | None, log_base: LogBase = "e") -> str:
    """Bucket a numeric value: missing or non-positive to ``MISS``, values up
    to 2 to ``"1"``, larger ones to ``floor(log(x) ** 2)``."""
    if x is None or math.isnan(x) or x <= 0:
        return MISSING_TOKEN
    if x <= 2:
        return "1"
    match log_base:
        case "e":
            logarithm = math.log(x)
        case "2":
            logarithm = math.log2(x)
        case _:
            raise ValueError(f"log_base must be 'e' or '2', got {log_base!r}")
    return str(math.floor(logarithm * logarithm))


Transform = Callable[[RawRecord], list[str]]
_TRANSFORMS: dict[str, Transform] = {}


def register_transform(name: str) -> Callable[[Transform], Transform]:
    """Register a record-to-tokens transform under ``name``."""

    def decorator(transform: Transform) -> Transform:
        if name in _TRANSFORMS:
            raise ValueError(f"transform {name!r} is already registered")
        _TRANSFORMS[name] = transform
        return transform

    return decorator


def get_transform(name: str) -> Transform:
    try:
        return _TRANSFORMS[name]
    except KeyError:
        raise ValueError(
            f"Unknown transform {name!r}; registered: {sorted(_TRANSFORMS)}"
        ) from None


def registered_transforms() -> list[str]:
    return sorted(_TRANSFORMS)


@register_transform("criteo")
def criteo_transform(record: RawRecord) -> list[str]:
    """Numerics bucketed by squared natural log, missing categoricals as ``MISS``."""
    return [discretize_numeric(value) for value in record.numeric_values] + [
        value if value is not None else MISSING_TOKEN
        for value in record.categorical_values
    ]


@register_transform("criteo-log2")
def criteo_log2_transform(record: RawRecord) -> list[str]:
    return [discretize_numeric(value, "2") for value in record.numeric_values] + [
        value if value is not None else MISSING_TOKEN
        for value in record.categorical_values
    ]


@dataclass(frozen=True)
class Vocabulary:
    """Per-field token to index maps; index 0 is the OOV token.

    Every field reserves at least two indices, so a field whose tokens all
    fall below ``min_count`` still gets a trainable embedding table.
    """

    mappings: tuple[dict[str, int], ...]
    min_count: int

    @property
    def num_fields(self) -> int:
        return len(self.mappings)

    @property
    def vocab_sizes(self) -> tuple[int, ...]:
        return tuple(
            max(len(mapping) + 1, MIN_VOCAB_SIZE) for mapping in self.mappings
        )

    def tokens(self, field: int) -> list[str]:
        """Tokens of ``field`` ordered by index, OOV excluded."""
        return sorted(self.mappings[field], key=self.mappings[field].__getitem__)

    def encode(self, token_rows: Iterable[Sequence[str]]) -> np.ndarray:
        """Map token rows to an (rows, fields) index array; unseen tokens go to OOV."""
        rows = [
            [
                mapping.get(token, OOV_INDEX)
                for mapping, token in zip(self.mappings, tokens)
            ]
            for tokens in token_rows
        ]
        if not rows:
            return np.zeros((0, self.num_fields), dtype=np.int64)
        return np.asarray(rows, dtype=np.int64)

    @classmethod
    def fit(
        cls, token_rows: Iterable[Sequence[str]], min_count: int = 2
    ) -> "Vocabulary":
        if min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {min_count}")
        counters: list[Counter] = []
        for tokens in token_rows:
            if not counters:
                counters = [Counter() for _ in tokens]
            elif len(tokens) != len(counters):
                raise ValueError(
                    f"row has {len(tokens)} fields, expected {len(counters)}"
                )
            for counter, token in zip(counters, tokens):
                counter[token] += 1
        mappings = tuple(
            {
                token: idx
                for idx, token in enumerate(
                    sorted(
                        token
                        for token, count in counter.items()
                        if count >= min_count
                    ),
                    start=1,
                )
            }
            for counter in counters
        )
        return cls(mappings=mappings, min_count=min_count)


def build_vocab(
    records: Iterable[RawRecord], min_count: int = 2, transform: str = "criteo"
) -> Vocabulary:
    """Fit a vocabulary on (training) records; rare values fall back to OOV."""
    to_tokens = get_transform(transform)
    return Vocabulary.fit((to_tokens(record) for record in records), min_count)
