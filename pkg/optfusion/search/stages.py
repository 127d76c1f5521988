"""Selection, retraining and the sequential-selection ablation."""
import logging
import time
from dataclasses import asdict, dataclass, replace
from typing import Any, Literal, Sequence

import numpy as np

import optfusion.numeric.autodiff as ad
from optfusion.data import DataSplits, EncodedDataset, batches
from optfusion.errors import DivergenceError, UndefinedMetricError
from optfusion.model import ArchitectureDescriptor, OptFusionSupernet, SupernetConfig
from .loss import bce_loss
from .metrics import evaluate, logloss
from .optimizer import Adam

log = logging.getLogger(__name__)

SearchAlgorithm = Literal["oneshot", "sequential"]


@dataclass
class TrainConfig:
    """Optimisation settings shared by every stage.

    ``arch_learning_rate`` defaults to ``learning_rate``; zero freezes alpha
    and beta.
    """

    learning_rate: float = 1e-3
    l2: float = 0.0
    batch_size: int = 4096
    selection_epochs: int = 1
    retrain_epochs: int = 5
    seed: int = 0
    early_stop_patience: int = 2
    arch_learning_rate: float | None = None
    eval_batch_size: int = 4096
    log_wall_time: bool = False
    debug: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.selection_epochs < 1 or self.retrain_epochs < 1:
            raise ValueError("epoch counts must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.arch_learning_rate is not None and self.arch_learning_rate < 0:
            raise ValueError("arch_learning_rate must be >= 0")

    @property
    def arch_lr(self) -> float:
        if self.arch_learning_rate is None:
            return self.learning_rate
        return self.arch_learning_rate


@dataclass(frozen=True)
class EpochRecord:
    stage: str
    epoch: int
    train_loss: float
    val_auc: float | None
    val_logloss: float
    wall_time_s: float | None = None

    def to_dict(self) -> dict[str, Any]:
        record = asdict(self)
        if record["wall_time_s"] is None:
            del record["wall_time_s"]
        return record


@dataclass
class SelectionResult:
    alpha: np.ndarray
    beta: np.ndarray
    records: list[EpochRecord]
    supernet: OptFusionSupernet

    def discretize(
        self, variant: Literal["hard", "soft"] = "hard", metadata: dict | None = None
    ) -> ArchitectureDescriptor:
        return self.supernet.discretize(variant, metadata)


@dataclass
class RetrainResult:
    supernet: OptFusionSupernet
    records: list[EpochRecord]
    test_auc: float
    test_logloss: float
    best_epoch: int
    stopped_early: bool


def _snapshot(
    supernet: OptFusionSupernet, stage: str, epoch: int, batch: int, loss: float
) -> dict[str, Any]:
    params = supernet.model_parameters()
    return {
        "stage": stage,
        "epoch": epoch,
        "batch": batch,
        "loss": loss,
        "alpha": supernet.connections.alpha.data.copy(),
        "beta": supernet.operations.beta.data.copy(),
        "max_abs_weight": max(float(np.abs(param.data).max()) for param in params),
        "non_finite_weights": [
            param.name for param in params if not np.all(np.isfinite(param.data))
        ],
    }


def train_epoch(
    supernet: OptFusionSupernet,
    optimizer: Adam,
    train: EncodedDataset,
    config: TrainConfig,
    epoch: int,
    stage: str,
    shuffle_seed: int,
) -> float:
    """One pass over ``train`` with one joint optimizer step per mini-batch."""
    total_loss = 0.0
    for batch_idx, (x, y) in enumerate(batches(train, config.batch_size, shuffle_seed)):
        optimizer.zero_grad()
        try:
            with ad.Tape(debug=config.debug) as tape:
                probabilities = supernet.forward(x)
                loss = bce_loss(
                    probabilities, y, supernet.model_parameters(), config.l2
                )
        except FloatingPointError as error:
            raise DivergenceError(
                f"{stage} epoch {epoch} batch {batch_idx}: {error}",
                _snapshot(supernet, stage, epoch, batch_idx, float("nan")),
            ) from error
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(
                f"{stage} epoch {epoch} batch {batch_idx}: loss is {value}",
                _snapshot(supernet, stage, epoch, batch_idx, value),
            )
        tape.backward(loss)
        optimizer.step()
        total_loss += value * x.shape[0]
    return total_loss / max(train.num_rows, 1)


def _validate(
    supernet: OptFusionSupernet, val: EncodedDataset, batch_size: int
) -> tuple[float | None, float]:
    try:
        return evaluate(supernet, val, batch_size)
    except UndefinedMetricError:
        log.warning("validation split holds a single class; AUC is undefined")
        scores = supernet.predict_proba(val.indices, batch_size)
        return None, logloss(val.labels, scores)


def _run_epochs(
    supernet: OptFusionSupernet,
    optimizer: Adam,
    data: DataSplits,
    config: TrainConfig,
    stage: str,
    num_epochs: int,
    seed_offset: int = 0,
) -> list[EpochRecord]:
    records = []
    for epoch in range(num_epochs):
        start = time.perf_counter()
        train_loss = train_epoch(
            supernet,
            optimizer,
            data.train,
            config,
            epoch,
            stage,
            shuffle_seed=config.seed + seed_offset + epoch,
        )
        val_auc, val_logloss = _validate(supernet, data.val, config.eval_batch_size)
        record = EpochRecord(
            stage=stage,
            epoch=epoch,
            train_loss=train_loss,
            val_auc=val_auc,
            val_logloss=val_logloss,
            wall_time_s=time.perf_counter() - start if config.log_wall_time else None,
        )
        log.info(
            f"{stage} epoch {epoch}: train loss {train_loss:.6f}, "
            f"val auc {val_auc}, val logloss {val_logloss:.6f}"
        )
        records.append(record)
    return records


def _search_supernet(
    supernet_config: SupernetConfig, data: DataSplits, seed: int, real_t: type
) -> OptFusionSupernet:
    return OptFusionSupernet(
        replace(supernet_config, mode="search"),
        data.train.field_schema(supernet_config.emb_dim),
        seed=seed,
        real_t=real_t,
    )


def selection_stage(
    supernet_config: SupernetConfig,
    train_config: TrainConfig,
    data: DataSplits,
    real_t: type = np.float32,
) -> SelectionResult:
    """Learn Theta, alpha and beta jointly on the training split.

    Alpha starts at 0.5 on every valid connection and beta at zero. Each
    mini-batch runs one backward pass and one optimizer step over all three.
    """
    supernet = _search_supernet(supernet_config, data, train_config.seed, real_t)
    optimizer = Adam(
        [
            (supernet.model_parameters(), train_config.learning_rate),
            (supernet.architecture_parameters(), train_config.arch_lr),
        ]
    )
    records = _run_epochs(
        supernet,
        optimizer,
        data,
        train_config,
        "selection",
        train_config.selection_epochs,
    )
    return SelectionResult(
        supernet.connections.alpha.data.copy(),
        supernet.operations.beta.data.copy(),
        records,
        supernet,
    )


def sequential_selection(
    supernet_config: SupernetConfig,
    train_config: TrainConfig,
    data: DataSplits,
    real_t: type = np.float32,
) -> SelectionResult:
    """Connections first with uniform operations, then operations on the
    frozen connections.

    Both phases run ``selection_epochs`` epochs and share Theta.
    """
    supernet = _search_supernet(supernet_config, data, train_config.seed, real_t)
    alpha, beta = supernet.connections.alpha, supernet.operations.beta
    model_params = supernet.model_parameters()
    connection_optimizer = Adam(
        [(model_params, train_config.learning_rate), ([alpha], train_config.arch_lr)]
    )
    records = _run_epochs(
        supernet,
        connection_optimizer,
        data,
        train_config,
        "sequential-connections",
        train_config.selection_epochs,
    )
    # gates read sign(alpha), so a frozen alpha is a frozen discretisation
    operation_optimizer = Adam(
        [(model_params, train_config.learning_rate), ([beta], train_config.arch_lr)]
    )
    records += _run_epochs(
        supernet,
        operation_optimizer,
        data,
        train_config,
        "sequential-operations",
        train_config.selection_epochs,
        seed_offset=train_config.selection_epochs,
    )
    return SelectionResult(alpha.data.copy(), beta.data.copy(), records, supernet)


def run_search(
    supernet_config: SupernetConfig,
    train_config: TrainConfig,
    data: DataSplits,
    algorithm: SearchAlgorithm = "oneshot",
    real_t: type = np.float32,
) -> SelectionResult:
    match algorithm:
        case "oneshot":
            return selection_stage(supernet_config, train_config, data, real_t)
        case "sequential":
            return sequential_selection(supernet_config, train_config, data, real_t)
        case _:
            raise ValueError(
                f"algorithm must be oneshot or sequential, got {algorithm!r}"
            )


def retrain_stage(
    supernet_config: SupernetConfig,
    train_config: TrainConfig,
    descriptor: ArchitectureDescriptor,
    data: DataSplits,
    mode: str | None = None,
    real_t: type = np.float32,
) -> RetrainResult:
    """Train freshly initialised Theta on a fixed architecture.

    Soft descriptors retrain with fixed operation probabilities, hard ones
    with one operation per component. Early stopping watches validation AUC
    and the best-validation weights are restored before testing.
    """
    if mode is None:
        mode = "retrain_soft" if descriptor.variant == "soft" else "retrain_hard"
    config = replace(
        supernet_config,
        mode=mode,
        n=descriptor.n,
        with_s0=descriptor.with_s0,
        op_set=descriptor.op_set,
    )
    supernet = OptFusionSupernet(
        config,
        data.train.field_schema(config.emb_dim),
        descriptor,
        seed=train_config.seed,
        real_t=real_t,
    )
    optimizer = Adam([(supernet.model_parameters(), train_config.learning_rate)])
    stage = f"retrain-{mode.removeprefix('retrain_')}"

    records: list[EpochRecord] = []
    best_auc = -np.inf
    best_epoch = 0
    best_state = supernet.state_dict()
    epochs_without_gain = 0
    stopped_early = False
    for epoch in range(train_config.retrain_epochs):
        (record,) = _run_epochs(
            supernet, optimizer, data, train_config, stage, 1, seed_offset=epoch
        )
        record = replace(record, epoch=epoch)
        records.append(record)
        score = record.val_auc if record.val_auc is not None else -record.val_logloss
        if score > best_auc:
            best_auc, best_epoch = score, epoch
            best_state = supernet.state_dict()
            epochs_without_gain = 0
        else:
            epochs_without_gain += 1
            if epochs_without_gain >= train_config.early_stop_patience:
                log.info(
                    f"{stage}: no validation gain for {epochs_without_gain} epochs, "
                    f"stopping at epoch {epoch}"
                )
                stopped_early = True
                break
    supernet.load_state_dict(best_state)
    test_auc, test_logloss = evaluate(supernet, data.test, train_config.eval_batch_size)
    log.info(f"{stage}: best epoch {best_epoch}, test auc {test_auc:.6f}")
    return RetrainResult(
        supernet, records, test_auc, test_logloss, best_epoch, stopped_early
    )


def metric_lines(records: Sequence[EpochRecord]) -> list[dict[str, Any]]:
    return [record.to_dict() for record in records]
