"""Reductions."""
import numpy as np

from .tensor import TensorValue, record_result


def reduce_sum(x: TensorValue, axis: int | None = None) -> TensorValue:
    """Sum over ``axis`` (all entries when ``None``, giving a 0-d tensor)."""
    x_shape = x.shape

    def _backward(grad):
        if axis is None:
            return (np.broadcast_to(grad, x_shape).copy(),)
        return (np.broadcast_to(np.expand_dims(grad, axis), x_shape).copy(),)

    return record_result(
        "reduce_sum", np.asarray(x.data.sum(axis=axis)), (x,), _backward
    )


def mean(x: TensorValue) -> TensorValue:
    count = x.size
    return record_result(
        "mean",
        np.asarray(x.data.mean()),
        (x,),
        lambda grad: (np.full(x.shape, grad / count, dtype=x.dtype),),
    )
