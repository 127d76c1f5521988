"""Encoded dataset cache in HDF5.

The file layout is::

    /                   attrs: format, version, min_count, transform, seed, ...
    /data/indices       (rows, fields) int64
    /data/labels        (rows,) int8
    /data/split         (rows,) int8, 0 train / 1 val / 2 test
    /vocab/field_XX     token strings ordered by index (index 0 = OOV omitted)

Datasets are written without timestamps so identical inputs give identical
files.
"""
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import h5py
import numpy as np

from optfusion.errors import InputError
from .dataset import DataSplits, EncodedDataset, splits_from_assignment
from .preprocessing import Vocabulary

CACHE_FORMAT = "optfusion-encoded"
CACHE_VERSION = 1


@dataclass(frozen=True)
class EncodedCache:
    dataset: EncodedDataset
    assignment: np.ndarray
    vocabulary: Vocabulary
    attributes: dict[str, Any] = field(default_factory=dict)

    @property
    def splits(self) -> DataSplits:
        return splits_from_assignment(self.dataset, self.assignment)


def content_digest(
    dataset: EncodedDataset, assignment: np.ndarray, vocabulary: Vocabulary
) -> str:
    """SHA-256 over arrays, vocabulary sizes and tokens."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(dataset.indices).tobytes())
    digest.update(np.ascontiguousarray(dataset.labels).tobytes())
    digest.update(np.ascontiguousarray(assignment, dtype=np.int8).tobytes())
    tokens = [vocabulary.tokens(idx) for idx in range(vocabulary.num_fields)]
    digest.update(json.dumps([list(dataset.vocab_sizes), tokens]).encode("utf-8"))
    return digest.hexdigest()


def save_encoded(
    path: str | Path,
    dataset: EncodedDataset,
    assignment: np.ndarray,
    vocabulary: Vocabulary,
    attributes: dict[str, Any] | None = None,
) -> str:
    """Write the cache and return its content digest."""
    if vocabulary.vocab_sizes != dataset.vocab_sizes:
        raise InputError("vocabulary does not match the dataset")
    digest = content_digest(dataset, assignment, vocabulary)
    with h5py.File(path, "w", libver="earliest") as f:
        f.attrs["format"] = CACHE_FORMAT
        f.attrs["version"] = CACHE_VERSION
        f.attrs["min_count"] = vocabulary.min_count
        f.attrs["digest"] = digest
        for key, value in sorted((attributes or {}).items()):
            f.attrs[key] = value
        data_grp = f.create_group("data", track_order=True)
        data_grp.create_dataset("indices", data=dataset.indices, track_times=False)
        data_grp.create_dataset("labels", data=dataset.labels, track_times=False)
        data_grp.create_dataset(
            "split", data=np.asarray(assignment, dtype=np.int8), track_times=False
        )
        vocab_grp = f.create_group("vocab", track_order=True)
        for idx in range(vocabulary.num_fields):
            vocab_grp.create_dataset(
                f"field_{idx:02d}",
                data=np.array(vocabulary.tokens(idx), dtype=h5py.string_dtype()),
                dtype=h5py.string_dtype(),
                track_times=False,
            )
    return digest


def load_encoded(path: str | Path) -> EncodedCache:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"encoded cache {path} does not exist")
    try:
        with h5py.File(path, "r") as f:
            if f.attrs.get("format") != CACHE_FORMAT:
                raise InputError(f"{path} is not an encoded dataset cache")
            if int(f.attrs["version"]) != CACHE_VERSION:
                raise InputError(
                    f"{path}: cache version {f.attrs['version']} is not supported"
                )
            attributes = {
                key: (value.item() if isinstance(value, np.generic) else value)
                for key, value in f.attrs.items()
            }
            indices = f["data/indices"][...]
            labels = f["data/labels"][...]
            assignment = f["data/split"][...]
            num_fields = indices.shape[1]
            mappings = tuple(
                {
                    token: idx
                    for idx, token in enumerate(
                        f[f"vocab/field_{field_idx:02d}"].asstr()[...].tolist(), start=1
                    )
                }
                for field_idx in range(num_fields)
            )
    except (OSError, KeyError) as error:
        if isinstance(error, InputError):
            raise
        raise InputError(f"cannot read encoded cache {path}: {error}") from None
    vocabulary = Vocabulary(mappings=mappings, min_count=int(attributes["min_count"]))
    dataset = EncodedDataset(indices, labels, vocabulary.vocab_sizes)
    return EncodedCache(dataset, assignment, vocabulary, attributes)
