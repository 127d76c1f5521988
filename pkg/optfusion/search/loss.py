"""Binary cross-entropy with L2 regularisation on the tape."""
from typing import Iterable

import numpy as np

import optfusion.numeric.autodiff as ad
from optfusion.errors import DimensionError

PROB_CLIP = 1e-7


def bce_loss(
    probabilities: ad.TensorValue,
    labels: np.ndarray,
    params: Iterable[ad.TensorValue] = (),
    l2: float = 0.0,
) -> ad.TensorValue:
    """Mean negative log-likelihood plus ``l2 * sum ||theta||^2``.

    Probabilities are clipped to ``[PROB_CLIP, 1 - PROB_CLIP]`` first.
    """
    if np.isnan(probabilities.data).any():
        raise FloatingPointError("loss received NaN probabilities")
    labels = np.asarray(labels)
    if labels.shape != probabilities.shape:
        raise DimensionError(
            f"labels {labels.shape} do not match probabilities {probabilities.shape}"
        )
    real_t = probabilities.dtype.type
    targets = ad.constant(labels.astype(real_t))
    complements = ad.constant((1 - labels).astype(real_t))
    clipped = ad.clip(probabilities, PROB_CLIP, 1.0 - PROB_CLIP)
    log_likelihood = ad.add(
        ad.mul(targets, ad.log(clipped)),
        ad.mul(complements, ad.log(ad.shift(ad.scale(clipped, -1.0), 1.0))),
    )
    loss = ad.scale(ad.mean(log_likelihood), -1.0)
    if l2 > 0:
        for param in params:
            loss = ad.add(loss, ad.scale(ad.reduce_sum(ad.mul(param, param)), l2))
    return loss
