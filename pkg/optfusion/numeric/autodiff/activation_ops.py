"""Activations, softmax and the straight-through step."""
from typing import Literal

import numpy as np
from scipy.special import expit, softmax as scipy_softmax

from optfusion.errors import DegenerateMaskError
from .tensor import TensorValue, record_result


def activations(x: TensorValue, kind: Literal["relu", "sigmoid"]) -> TensorValue:
    match kind:
        case "relu":
            active = x.data > 0
            return record_result(
                "relu",
                np.where(active, x.data, 0).astype(x.dtype),
                (x,),
                lambda grad: (np.where(active, grad, 0).astype(grad.dtype),),
            )
        case "sigmoid":
            # expit switches branch on the sign of x, no overflow for large |x|
            probs = expit(x.data)
            return record_result(
                "sigmoid",
                probs,
                (x,),
                lambda grad: (grad * probs * (1 - probs),),
            )
        case _:
            raise ValueError(f"Invalid activation kind {kind}")


def relu(x: TensorValue) -> TensorValue:
    return activations(x, "relu")


def sigmoid(x: TensorValue) -> TensorValue:
    return activations(x, "sigmoid")


def softmax(logits: TensorValue) -> TensorValue:
    """Softmax over the last axis.

    ``-inf`` logits act as a mask and receive exactly zero probability; a row
    whose logits are all ``-inf`` raises :class:`DegenerateMaskError`.
    """
    if logits.data.shape[-1] < 1:
        raise DegenerateMaskError("softmax over an empty axis")
    if np.isneginf(logits.data).all(axis=-1).any():
        raise DegenerateMaskError("softmax: every logit of a row is -inf")
    probs = scipy_softmax(logits.data, axis=-1).astype(logits.dtype)

    def _backward(grad):
        weighted = (grad * probs).sum(axis=-1, keepdims=True)
        return (probs * (grad - weighted),)

    return record_result("softmax", probs, (logits,), _backward)


def ste(x: TensorValue) -> TensorValue:
    """Unit step forward (1 where x > 0, else 0), identity backward."""
    return record_result(
        "ste", (x.data > 0).astype(x.dtype), (x,), lambda grad: (grad,)
    )
