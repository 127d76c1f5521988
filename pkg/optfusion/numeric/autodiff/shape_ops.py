"""Shape manipulation: concatenation, reshape, explicit broadcast, slicing."""
from typing import Sequence

import numpy as np

from optfusion.errors import DimensionError, EmptyFusionError
from .tensor import TensorValue, record_result


def concat(inputs: Sequence[TensorValue], axis: int = 0) -> TensorValue:
    """Concatenate along ``axis``; all other axes must agree."""
    if len(inputs) == 0:
        raise EmptyFusionError("concat received no inputs")
    reference = inputs[0]
    axis = axis % max(reference.ndim, 1)
    for tensor in inputs[1:]:
        if tensor.ndim != reference.ndim or any(
            tensor.shape[dim] != reference.shape[dim]
            for dim in range(reference.ndim)
            if dim != axis
        ):
            raise DimensionError(
                f"concat: shape {tensor.shape} does not match {reference.shape} "
                f"off axis {axis}"
            )
    split_points = np.cumsum([tensor.shape[axis] for tensor in inputs])[:-1]

    def _backward(grad):
        return tuple(np.split(grad, split_points, axis=axis))

    return record_result(
        "concat",
        np.concatenate([tensor.data for tensor in inputs], axis=axis),
        tuple(inputs),
        _backward,
    )


def reshape(x: TensorValue, shape: tuple[int, ...]) -> TensorValue:
    original_shape = x.shape
    return record_result(
        "reshape",
        x.data.reshape(shape),
        (x,),
        lambda grad: (grad.reshape(original_shape),),
    )


def broadcast_to(x: TensorValue, shape: tuple[int, ...]) -> TensorValue:
    """Explicit numpy-style broadcast; backward sums over expanded axes."""
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError as error:
        raise DimensionError(
            f"broadcast_to: cannot broadcast {x.shape} to {shape}"
        ) from error
    original_shape = x.shape
    num_leading = len(shape) - len(original_shape)
    expanded_axes = tuple(range(num_leading)) + tuple(
        num_leading + dim
        for dim, size in enumerate(original_shape)
        if size == 1 and shape[num_leading + dim] != 1
    )

    def _backward(grad):
        reduced = grad.sum(axis=expanded_axes, keepdims=True) if expanded_axes else grad
        return (reduced.reshape(original_shape),)

    return record_result("broadcast_to", data, (x,), _backward)


def slice_columns(x: TensorValue, start: int, stop: int) -> TensorValue:
    """Columns ``start:stop`` of a 2D tensor."""
    if x.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise DimensionError(
            f"slice_columns: invalid range [{start}, {stop}) for shape {x.shape}"
        )
    x_shape = x.shape

    def _backward(grad):
        full = np.zeros(x_shape, dtype=grad.dtype)
        full[:, start:stop] = grad
        return (full,)

    return record_result("slice_columns", x.data[:, start:stop].copy(), (x,), _backward)


def take(x: TensorValue, flat_indices: Sequence[int] | np.ndarray) -> TensorValue:
    """Entries of ``x`` at flat (row-major) positions, as a 1D tensor."""
    flat_indices = np.asarray(flat_indices, dtype=np.int64)
    if flat_indices.size and (flat_indices.min() < 0 or flat_indices.max() >= x.size):
        bad = flat_indices[(flat_indices < 0) | (flat_indices >= x.size)][0]
        raise IndexError(f"take: flat index {bad} out of range for size {x.size}")
    x_shape = x.shape

    def _backward(grad):
        full = np.zeros(int(np.prod(x_shape)), dtype=grad.dtype)
        np.add.at(full, flat_indices, grad)
        return (full.reshape(x_shape),)

    return record_result("take", x.data.reshape(-1)[flat_indices], (x,), _backward)
