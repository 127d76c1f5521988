"""One-shot fusion search, retraining and evaluation."""
from .loss import PROB_CLIP, bce_loss
from .optimizer import Adam, OptimizerState, adam_step
from .metrics import auc, evaluate, logloss
from .stages import (
    EpochRecord,
    RetrainResult,
    SelectionResult,
    TrainConfig,
    metric_lines,
    retrain_stage,
    run_search,
    selection_stage,
    sequential_selection,
    train_epoch,
)
