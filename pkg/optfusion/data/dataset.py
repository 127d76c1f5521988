"""Encoded datasets, seeded splits and mini-batches."""
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from optfusion.errors import InputError
from optfusion.model.components import FieldSchema
from .preprocessing import Vocabulary, get_transform
from .records import RawRecord

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class EncodedDataset:
    """Immutable (rows, fields) index matrix with binary labels.

    Arrays are made read-only on construction so one dataset can be shared
    between readers.
    """

    indices: np.ndarray
    labels: np.ndarray
    vocab_sizes: tuple[int, ...]
    split: str = "train"

    def __post_init__(self) -> None:
        indices = np.array(self.indices, dtype=np.int64, copy=True)
        labels = np.array(self.labels, dtype=np.int8, copy=True)
        vocab_sizes = tuple(int(size) for size in self.vocab_sizes)
        if indices.ndim != 2 or indices.shape[1] != len(vocab_sizes):
            raise InputError(
                f"indices of shape {indices.shape} "
                f"do not match {len(vocab_sizes)} fields"
            )
        if labels.shape != (indices.shape[0],):
            raise InputError(
                f"{labels.shape[0]} labels for {indices.shape[0]} rows"
            )
        if not np.isin(labels, (0, 1)).all():
            raise InputError("labels must be 0 or 1")
        if indices.size and (
            (indices < 0).any() or (indices >= np.asarray(vocab_sizes)).any()
        ):
            raise InputError("indices fall outside the field vocabularies")
        if self.split not in SPLIT_NAMES:
            raise ValueError(f"split must be one of {SPLIT_NAMES}, got {self.split!r}")
        indices.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vocab_sizes", vocab_sizes)

    @property
    def num_rows(self) -> int:
        return self.indices.shape[0]

    @property
    def num_fields(self) -> int:
        return self.indices.shape[1]

    @property
    def positive_ratio(self) -> float:
        return float(self.labels.mean()) if self.num_rows else 0.0

    def field_schema(self, emb_dim: int) -> FieldSchema:
        return FieldSchema(self.vocab_sizes, emb_dim)

    def subset(self, rows: np.ndarray, split: str | None = None) -> "EncodedDataset":
        return EncodedDataset(
            self.indices[rows], self.labels[rows], self.vocab_sizes, split or self.split
        )

    def __len__(self) -> int:
        return self.num_rows


class DataSplits(NamedTuple):
    train: EncodedDataset
    val: EncodedDataset
    test: EncodedDataset


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise ValueError(f"expected three split ratios, got {len(ratios)}")
    if any(ratio <= 0 for ratio in ratios):
        raise ValueError(f"split ratios must be positive, got {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")
    return tuple(float(ratio) for ratio in ratios)  # type: ignore


def split_assignment(
    num_rows: int, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0
) -> np.ndarray:
    """Split id (0 train, 1 val, 2 test) per row from one seeded shuffle."""
    train_ratio, val_ratio, _ = _check_ratios(ratios)
    order = np.random.default_rng(seed).permutation(num_rows)
    num_train = int(round(train_ratio * num_rows))
    num_val = int(round(val_ratio * num_rows))
    assignment = np.full(num_rows, 2, dtype=np.int8)
    assignment[order[:num_train]] = 0
    assignment[order[num_train : num_train + num_val]] = 1
    return assignment


def split(
    dataset: EncodedDataset,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DataSplits:
    """Shuffled train / val / test partition, 8:1:1 by default."""
    train_ratio, val_ratio, _ = _check_ratios(ratios)
    order = np.random.default_rng(seed).permutation(dataset.num_rows)
    num_train = int(round(train_ratio * dataset.num_rows))
    num_val = int(round(val_ratio * dataset.num_rows))
    return DataSplits(
        dataset.subset(order[:num_train], "train"),
        dataset.subset(order[num_train : num_train + num_val], "val"),
        dataset.subset(order[num_train + num_val :], "test"),
    )


def splits_from_assignment(
    dataset: EncodedDataset, assignment: np.ndarray
) -> DataSplits:
    """Splits of a dataset whose rows carry a stored split id, row order kept."""
    assignment = np.asarray(assignment)
    if assignment.shape != (dataset.num_rows,):
        raise InputError("split assignment does not match the row count")
    return DataSplits(
        *(
            dataset.subset(np.flatnonzero(assignment == split_id), name)
            for split_id, name in enumerate(SPLIT_NAMES)
        )
    )


def batches(
    dataset: EncodedDataset, batch_size: int, shuffle_seed: int | None = None
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One pass over ``dataset`` in (indices, labels) mini-batches.

    Every row appears exactly once; the last batch may be short. With a
    seed the row order is a reproducible permutation.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle_seed is None:
        order = np.arange(dataset.num_rows)
    else:
        order = np.random.default_rng(shuffle_seed).permutation(dataset.num_rows)
    for start in range(0, dataset.num_rows, batch_size):
        rows = order[start : start + batch_size]
        yield dataset.indices[rows], dataset.labels[rows]


def encode_records(
    records: Iterable[RawRecord], vocabulary: Vocabulary, transform: str = "criteo"
) -> EncodedDataset:
    """Encode raw records with a fitted vocabulary; the vocabulary is not changed."""
    to_tokens = get_transform(transform)
    labels: list[int] = []
    token_rows: list[list[str]] = []
    for record in records:
        labels.append(record.label)
        token_rows.append(to_tokens(record))
    dataset = EncodedDataset(
        vocabulary.encode(token_rows),
        np.asarray(labels, dtype=np.int8),
        vocabulary.vocab_sizes,
    )
    logging.getLogger(__name__).info(
        f"encoded {dataset.num_rows} rows over {dataset.num_fields} fields "
        f"(positive ratio {dataset.positive_ratio:.4f})"
    )
    return dataset
