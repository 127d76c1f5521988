"""End-to-end run pipeline behind the command line.

Each function takes a resolved :class:`RunConfig` and writes self-describing
artefacts (config hash and seed embedded) into ``config.out``.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import psutil

from optfusion.data import (
    CRITEO_SCHEMA,
    DataSplits,
    EncodedDataset,
    SyntheticSpec,
    Vocabulary,
    build_vocab,
    encode_records,
    generate_synthetic,
    load_encoded,
    parse_tsv,
    save_encoded,
    split,
    split_assignment,
    splits_from_assignment,
)
from optfusion.errors import ContractError, DivergenceError, InputError
from optfusion.model import (
    ArchitectureDescriptor,
    FieldSchema,
    OptFusionSupernet,
    SupernetConfig,
    deserialize,
    export_dot,
    load_descriptor,
    preset,
    save_descriptor,
    serialize,
)
from optfusion.model.fusion import canonical_op_set
from optfusion.search import (
    TrainConfig,
    evaluate,
    retrain_stage,
    run_search,
)
from optfusion.utils import (
    config_hash,
    get_precision_name,
    get_real_t,
    load_checkpoint,
    save_checkpoint,
    write_json,
    write_metric_log,
)

log = logging.getLogger(__name__)

DATASET_KINDS = ("criteo-tsv", "synthetic", "encoded-cache")
ARCH_VARIANTS = ("soft", "hard")
# fields that name where artefacts go, not what is computed
_UNHASHED_FIELDS = ("out",)


@dataclass
class RunConfig:
    """Merged view of model, training, data and output settings."""

    out: str = "runs/optfusion"
    data: str | None = None
    dataset_kind: str | None = None
    n: int = 3
    emb_dim: int = 8
    with_s0: bool = True
    ops: tuple[str, ...] = ("ADD", "PROD", "CONCAT", "ATT")
    batch_size: int = 4096
    lr: float = 1e-3
    arch_lr: float | None = None
    l2: float = 0.0
    seed: int = 0
    epochs_search: int = 1
    epochs_retrain: int = 5
    patience: int = 2
    mode: str = "soft"
    algo: str = "oneshot"
    precision: str = "single"
    split_seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    min_count: int = 2
    transform: str = "criteo"
    stacked_depth: int = 1
    synthetic_teacher: str = "stacked"
    synthetic_n: int = 2
    synthetic_fields: int = 10
    synthetic_vocab: int = 100
    synthetic_samples: int = 200_000
    synthetic_noise: float = 0.05
    teacher_seed: int = 0
    log_wall_time: bool = False

    def __post_init__(self) -> None:
        self.ops = tuple(op.value for op in canonical_op_set(self.ops))
        ratios = tuple(float(ratio) for ratio in self.split_ratios)
        self.split_ratios = ratios  # type: ignore
        if self.dataset_kind is None:
            if self.data is None:
                self.dataset_kind = "synthetic"
            elif self.data.endswith((".h5", ".hdf5")):
                self.dataset_kind = "encoded-cache"
            else:
                self.dataset_kind = "criteo-tsv"
        if self.dataset_kind not in DATASET_KINDS:
            raise ValueError(f"dataset kind must be one of {DATASET_KINDS}")
        if self.dataset_kind != "synthetic" and self.data is None:
            raise ValueError(f"dataset kind {self.dataset_kind} needs an input path")
        if self.mode not in ARCH_VARIANTS:
            raise ValueError(f"mode must be soft or hard, got {self.mode!r}")
        if self.algo not in ("oneshot", "sequential"):
            raise ValueError(f"algo must be oneshot or sequential, got {self.algo!r}")
        if self.synthetic_teacher not in ("stacked", "parallel"):
            raise ValueError("synthetic teacher must be stacked or parallel")
        if self.stacked_depth < 1:
            raise ValueError(f"stacked_depth must be >= 1, got {self.stacked_depth}")

    def to_dict(self) -> dict[str, Any]:
        document = asdict(self)
        for key, value in document.items():
            if isinstance(value, tuple):
                document[key] = list(value)
        return document

    @property
    def hash(self) -> str:
        document = self.to_dict()
        for key in _UNHASHED_FIELDS:
            document.pop(key)
        return config_hash(document)

    @property
    def dataset_tag(self) -> str:
        if self.dataset_kind == "synthetic":
            return f"synthetic-{self.synthetic_teacher}"
        return f"{self.dataset_kind}:{Path(self.data).name}"  # type: ignore

    @property
    def real_t(self) -> type:
        return get_real_t(self.precision)

    def supernet_config(self, mode: str = "search") -> SupernetConfig:
        return SupernetConfig(
            n=self.n,
            emb_dim=self.emb_dim,
            with_s0=self.with_s0,
            mode=mode,
            op_set=canonical_op_set(self.ops),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.lr,
            l2=self.l2,
            batch_size=self.batch_size,
            selection_epochs=self.epochs_search,
            retrain_epochs=self.epochs_retrain,
            seed=self.seed,
            early_stop_patience=self.patience,
            arch_learning_rate=self.arch_lr,
            log_wall_time=self.log_wall_time,
        )

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            teacher=preset(
                self.synthetic_teacher,  # type: ignore
                n=self.synthetic_n,
                with_s0=False,
            ),
            num_fields=self.synthetic_fields,
            vocab_size=self.synthetic_vocab,
            num_samples=self.synthetic_samples,
            emb_dim=self.emb_dim,
            teacher_seed=self.teacher_seed,
            seed=self.split_seed,
            label_noise=self.synthetic_noise,
        )


def _stamp(config: RunConfig) -> dict[str, Any]:
    return {"config_hash": config.hash, "seed": config.seed}


# data


def encode_tsv(
    path: str | Path,
    min_count: int = 2,
    transform: str = "criteo",
    split_seed: int = 0,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
) -> tuple[EncodedDataset, np.ndarray, Vocabulary]:
    """Parse, assign splits, fit the vocabulary on train rows only, encode."""
    records = list(parse_tsv(path, CRITEO_SCHEMA))
    if not records:
        raise InputError(f"{path} holds no records")
    assignment = split_assignment(len(records), ratios, split_seed)
    vocabulary = build_vocab(
        (record for record, split_id in zip(records, assignment) if split_id == 0),
        min_count,
        transform,
    )
    return encode_records(records, vocabulary, transform), assignment, vocabulary


def preprocess(
    input_path: str | Path,
    out_dir: str | Path,
    min_count: int = 2,
    transform: str = "criteo",
    split_seed: int = 0,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
) -> dict[str, Any]:
    """Write ``encoded.h5`` and ``stats.json``; returns the stats summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, assignment, vocabulary = encode_tsv(
        input_path, min_count, transform, split_seed, ratios
    )
    settings = {
        "input": Path(input_path).name,
        "min_count": min_count,
        "transform": transform,
        "split_seed": split_seed,
        "split_ratios": list(ratios),
    }
    hashed = config_hash(settings)
    digest = save_encoded(
        out_dir / "encoded.h5",
        dataset,
        assignment,
        vocabulary,
        {"transform": transform, "seed": split_seed, "config_hash": hashed},
    )
    stats = {
        "num_samples": dataset.num_rows,
        "num_fields": dataset.num_fields,
        "positive_ratio": dataset.positive_ratio,
        "vocab_sizes": list(dataset.vocab_sizes),
        "split_sizes": {
            name: int((assignment == split_id).sum())
            for split_id, name in enumerate(("train", "val", "test"))
        },
        "digest": digest,
        "config_hash": hashed,
        "seed": split_seed,
        "settings": settings,
    }
    write_json(out_dir / "stats.json", stats)
    log.info(f"preprocessed {dataset.num_rows} rows into {out_dir}")
    return stats


def load_data(config: RunConfig) -> DataSplits:
    match config.dataset_kind:
        case "encoded-cache":
            return load_encoded(config.data).splits  # type: ignore
        case "criteo-tsv":
            dataset, assignment, _ = encode_tsv(
                config.data,  # type: ignore
                config.min_count,
                config.transform,
                config.split_seed,
                config.split_ratios,
            )
            return splits_from_assignment(dataset, assignment)
        case "synthetic":
            return split(
                generate_synthetic(config.synthetic_spec()),
                config.split_ratios,
                config.split_seed,
            )
        case _:
            raise ValueError(f"Invalid dataset kind {config.dataset_kind}")


# grid fan-out


def expand_grid(
    base: RunConfig,
    seeds: Sequence[int] = (),
    learning_rates: Sequence[float] = (),
    l2s: Sequence[float] = (),
) -> list[RunConfig]:
    """One config per (seed, lr, l2); several points get their own sub-directory."""
    seeds = list(seeds) or [base.seed]
    learning_rates = list(learning_rates) or [base.lr]
    l2s = list(l2s) or [base.l2]
    points = [
        (seed, learning_rate, l2)
        for seed in seeds
        for learning_rate in learning_rates
        for l2 in l2s
    ]
    if len(points) == 1:
        seed, learning_rate, l2 = points[0]
        return [replace(base, seed=seed, lr=learning_rate, l2=l2)]
    return [
        replace(
            base,
            seed=seed,
            lr=learning_rate,
            l2=l2,
            out=str(Path(base.out) / f"seed{seed}_lr{learning_rate:g}_l2{l2:g}"),
        )
        for seed, learning_rate, l2 in points
    ]


def default_jobs() -> int:
    return psutil.cpu_count(logical=False) or 1


def run_grid(
    job: Callable[..., dict[str, Any]],
    configs: Sequence[RunConfig],
    jobs: int | None = None,
    **kwargs: Any,
) -> list[dict[str, Any]]:
    """Run independent grid points, in worker processes when ``jobs > 1``."""
    jobs = default_jobs() if jobs is None else jobs
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if len(configs) == 1 or jobs == 1:
        return [job(config, **kwargs) for config in configs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as executor:
        futures = [executor.submit(job, config, **kwargs) for config in configs]
        return [future.result() for future in futures]


# stages


def _divergence_report(error: DivergenceError) -> dict[str, Any]:
    return {
        "message": str(error),
        "snapshot": {
            key: value.tolist() if isinstance(value, np.ndarray) else value
            for key, value in error.snapshot.items()
        },
    }


def search(config: RunConfig) -> dict[str, Any]:
    """Selection stage plus discretisation into soft and hard descriptors."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(config)
    write_json(out / "run_config.json", {"config": config.to_dict(), **stamp})
    splits = load_data(config)
    try:
        result = run_search(
            config.supernet_config("search"),
            config.train_config(),
            splits,
            config.algo,  # type: ignore
            config.real_t,
        )
    except DivergenceError as error:
        write_json(out / "divergence.json", {**_divergence_report(error), **stamp})
        raise
    write_metric_log(
        out / "metrics_search.jsonl",
        [{**record.to_dict(), **stamp} for record in result.records],
    )
    save_checkpoint(
        out / "arch_params.h5",
        {"alpha": result.alpha, "beta": result.beta},
        {
            "kind": "architecture",
            "precision": get_precision_name(result.alpha.dtype.type),
            **stamp,
        },
    )
    metadata = {
        "dataset": config.dataset_tag,
        "stage": f"search-{config.algo}",
        **stamp,
    }
    written = {}
    for variant in ARCH_VARIANTS:
        descriptor = result.discretize(variant, metadata)  # type: ignore
        save_descriptor(descriptor, out / f"architecture_{variant}.json")
        (out / f"architecture_{variant}.dot").write_text(export_dot(descriptor))
        written[variant] = str(out / f"architecture_{variant}.json")
    log.info(f"search finished, descriptors in {out}")
    return {"out": str(out), "descriptors": written, **stamp}


def resolve_descriptor(
    config: RunConfig,
    arch_path: str | None = None,
    preset_kind: str | None = None,
    op_override: str | None = None,
) -> tuple[ArchitectureDescriptor, str, str]:
    """Descriptor, supernet mode and artefact label of a retrain request."""
    if preset_kind is not None:
        descriptor = preset(
            preset_kind,  # type: ignore
            config.n,
            config.with_s0,
            canonical_op_set(config.ops),
            shallow_depth=config.stacked_depth,
        )
        mode, label = "fixed", f"preset-{preset_kind}"
        if preset_kind == "stacked" and config.stacked_depth > 1:
            label = f"{label}-{config.stacked_depth}"
    else:
        path = (
            Path(arch_path)
            if arch_path
            else Path(config.out) / f"architecture_{config.mode}.json"
        )
        descriptor = load_descriptor(path)
        if config.mode == "soft":
            descriptor, mode = descriptor.to_soft(), "retrain_soft"
        else:
            descriptor, mode = descriptor.to_hard(), "retrain_hard"
        label = config.mode
    if op_override is not None:
        descriptor = descriptor.with_uniform_operation(op_override)
        mode = "retrain_hard" if mode != "fixed" else mode
        label = f"{label}-{descriptor.operations[0].value.lower()}"  # type: ignore
    return descriptor, mode, label


def retrain(
    config: RunConfig,
    arch_path: str | None = None,
    preset_kind: str | None = None,
    op_override: str | None = None,
) -> dict[str, Any]:
    """Fresh training on a fixed architecture; writes checkpoint and metrics."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(config)
    descriptor, mode, label = resolve_descriptor(
        config, arch_path, preset_kind, op_override
    )
    splits = load_data(config)
    try:
        result = retrain_stage(
            replace(
                config.supernet_config(mode), n=descriptor.n, with_s0=descriptor.with_s0
            ),
            config.train_config(),
            descriptor,
            splits,
            mode=mode,
            real_t=config.real_t,
        )
    except DivergenceError as error:
        write_json(
            out / f"divergence_{label}.json", {**_divergence_report(error), **stamp}
        )
        raise
    write_metric_log(
        out / f"metrics_retrain_{label}.jsonl",
        [{**record.to_dict(), **stamp} for record in result.records],
    )
    save_checkpoint(
        out / f"model_{label}.h5",
        result.supernet.state_dict(),
        {
            "kind": "model",
            "label": label,
            "mode": mode,
            "emb_dim": config.emb_dim,
            "precision": get_precision_name(result.supernet.real_t),
            "architecture": serialize(descriptor),
            **stamp,
        },
    )
    metrics = {
        "label": label,
        "mode": mode,
        "auc": result.test_auc,
        "logloss": result.test_logloss,
        "best_epoch": result.best_epoch,
        "stopped_early": result.stopped_early,
        **stamp,
    }
    write_json(out / f"metrics_{label}.json", metrics)
    return metrics


def load_model(checkpoint: str | Path, vocab_sizes: Sequence[int]) -> OptFusionSupernet:
    """Rebuild a retrained model from its checkpoint."""
    state, attributes = load_checkpoint(checkpoint)
    if attributes.get("kind") != "model":
        raise InputError(f"{checkpoint} is not a model checkpoint")
    descriptor = deserialize(attributes["architecture"])
    config = SupernetConfig(
        n=descriptor.n,
        emb_dim=int(attributes["emb_dim"]),
        with_s0=descriptor.with_s0,
        mode=attributes["mode"],
        op_set=descriptor.op_set,
    )
    supernet = OptFusionSupernet(
        config,
        FieldSchema(tuple(vocab_sizes), config.emb_dim),
        descriptor,
        seed=int(attributes["seed"]),
        real_t=get_real_t(attributes["precision"]),
    )
    try:
        supernet.load_state_dict(state)
    except ContractError as error:
        raise InputError(f"{checkpoint} does not fit the dataset: {error}") from None
    return supernet


def evaluate_checkpoint(
    config: RunConfig, checkpoint: str | Path, split_name: str = "test"
) -> dict[str, Any]:
    splits = load_data(config)
    dataset: EncodedDataset = getattr(splits, split_name)
    model = load_model(checkpoint, dataset.vocab_sizes)
    auc_value, logloss_value = evaluate(model, dataset)
    result = {
        "checkpoint": Path(checkpoint).name,
        "split": split_name,
        "rows": dataset.num_rows,
        "auc": auc_value,
        "logloss": logloss_value,
        **_stamp(config),
    }
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / f"evaluation_{Path(checkpoint).stem}_{split_name}.json", result)
    return result
