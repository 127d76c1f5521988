"""Run artefacts: JSON documents, metric logs, config hashes and HDF5 checkpoints.

Checkpoint layout::

    /                attrs: kind, seed, config_hash, precision
    /params/<component>/<weight>     component and fusion weights
    /params/arch/alpha, /params/arch/beta
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable

import h5py
import numpy as np

from optfusion.errors import InputError


def canonical_json(document: Any) -> str:
    return json.dumps(document, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a resolved run config."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def write_json(path: str | Path, document: Any) -> None:
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise InputError(f"cannot read {path}: {error.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as error:
        raise InputError(f"{path}: invalid JSON ({error})") from None


def write_metric_log(path: str | Path, lines: Iterable[dict[str, Any]]) -> None:
    """One JSON object per line, keys sorted."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(json.dumps(line, sort_keys=True) + "\n")


def read_metric_log(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"metric log {path} does not exist")
    records = []
    for line_number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            raise InputError(f"{path}:{line_number}: invalid metric record") from None
    return records


def save_checkpoint(
    path: str | Path, state: dict[str, np.ndarray], attributes: dict[str, Any]
) -> None:
    """Write named arrays under ``/params``.

    Attribute values must be scalars or strings.
    """
    with h5py.File(path, "w") as f:
        for key, value in sorted(attributes.items()):
            f.attrs[key] = value
        params_grp = f.create_group("params")
        for name, array in sorted(state.items()):
            params_grp.create_dataset(name, data=array, track_times=False)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"checkpoint {path} does not exist")
    state: dict[str, np.ndarray] = {}
    with h5py.File(path, "r") as f:
        attributes = {
            key: (value.item() if isinstance(value, np.generic) else value)
            for key, value in f.attrs.items()
        }

        def _collect(name: str, node: Any) -> None:
            if isinstance(node, h5py.Dataset):
                state[name] = node[...]

        f["params"].visititems(_collect)
    return state, attributes
