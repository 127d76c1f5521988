"""AUC and log-loss of click predictions."""
import numpy as np
from scipy.stats import rankdata

from optfusion.errors import DimensionError, UndefinedMetricError
from .loss import PROB_CLIP


def _as_pair(labels: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels).reshape(-1)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if labels.shape != scores.shape:
        raise DimensionError(f"{labels.size} labels for {scores.size} scores")
    return labels, scores


def auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Area under the ROC curve from the rank statistic; ties count one half."""
    labels, scores = _as_pair(labels, scores)
    positive = labels == 1
    num_pos = int(positive.sum())
    num_neg = labels.size - num_pos
    if num_pos == 0 or num_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative labels")
    ranks = rankdata(scores, method="average")
    rank_sum = ranks[positive].sum()
    return float((rank_sum - num_pos * (num_pos + 1) / 2.0) / (num_pos * num_neg))


def logloss(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mean cross-entropy with probabilities clipped like the training loss."""
    labels, scores = _as_pair(labels, scores)
    if labels.size == 0:
        raise UndefinedMetricError("log-loss of an empty set")
    clipped = np.clip(scores, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(labels * np.log(clipped) + (1 - labels) * np.log1p(-clipped)))


def evaluate(model, dataset, batch_size: int = 4096) -> tuple[float, float]:
    """(AUC, log-loss) of a frozen model on an encoded dataset."""
    scores = model.predict_proba(dataset.indices, batch_size=batch_size)
    return auc(dataset.labels, scores), logloss(dataset.labels, scores)
