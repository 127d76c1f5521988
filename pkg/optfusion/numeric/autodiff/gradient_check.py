"""Central finite-difference gradient checking."""
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, TensorValue


def numerical_gradient(
    fn: Callable[..., TensorValue],
    inputs: Sequence[TensorValue],
    wrt: TensorValue,
    step: float = 1e-5,
) -> np.ndarray:
    """Central difference estimate of d fn(*inputs) / d wrt."""
    grad = np.zeros_like(wrt.data)
    flat_data = wrt.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for idx in range(flat_data.size):
        original = flat_data[idx]
        flat_data[idx] = original + step
        loss_plus = fn(*inputs).item()
        flat_data[idx] = original - step
        loss_minus = fn(*inputs).item()
        flat_data[idx] = original
        flat_grad[idx] = (loss_plus - loss_minus) / (2 * step)
    return grad


def check_gradients(
    fn: Callable[..., TensorValue],
    inputs: Sequence[TensorValue],
    step: float = 1e-5,
    floor: float = 1e-2,
) -> float:
    """Max per-element relative error between analytic and numerical gradients.

    ``fn`` maps ``inputs`` to a scalar tensor. The error of one element is
    ``|g_a - g_n| / max(|g_a| + |g_n|, floor)``; the floor turns the check
    into an absolute one for gradients near zero, where central differences
    are dominated by round-off. Only inputs with ``requires_grad`` are checked.
    """
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    checked = [tensor for tensor in inputs if tensor.requires_grad]
    for tensor in checked:
        tensor.grad = None
    with Tape() as tape:
        loss = fn(*inputs)
    tape.backward(loss)
    analytic = {
        id(tensor): (
            tensor.grad.copy()
            if tensor.grad is not None
            else np.zeros_like(tensor.data)
        )
        for tensor in checked
    }

    max_rel_err = 0.0
    for tensor in checked:
        if tensor.size == 0:
            continue
        numeric = numerical_gradient(fn, inputs, tensor, step=step)
        exact = analytic[id(tensor)]
        scale = np.maximum(np.abs(exact) + np.abs(numeric), floor)
        rel_err = np.max(np.abs(exact - numeric) / scale)
        max_rel_err = max(max_rel_err, float(rel_err))
    return max_rel_err
