"""Elementwise tensor operations.

No implicit broadcasting: binary operands must share one shape, use
:func:`optfusion.numeric.autodiff.broadcast_to` to expand explicitly.
"""
from typing import Literal

import numpy as np

from optfusion.errors import DimensionError
from .tensor import TensorValue, record_result


def _check_same_shape(a: TensorValue, b: TensorValue, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def elementwise(
    a: TensorValue, b: TensorValue, kind: Literal["add", "mul", "sub"]
) -> TensorValue:
    """Elementwise binary op of two same-shaped tensors."""
    _check_same_shape(a, b, kind)
    match kind:
        case "add":
            return record_result(
                "add", a.data + b.data, (a, b), lambda grad: (grad, grad)
            )
        case "sub":
            return record_result(
                "sub", a.data - b.data, (a, b), lambda grad: (grad, -grad)
            )
        case "mul":
            a_data, b_data = a.data, b.data
            return record_result(
                "mul",
                a_data * b_data,
                (a, b),
                lambda grad: (grad * b_data, grad * a_data),
            )
        case _:
            raise ValueError(f"Invalid elementwise kind {kind}")


def add(a: TensorValue, b: TensorValue) -> TensorValue:
    return elementwise(a, b, "add")


def sub(a: TensorValue, b: TensorValue) -> TensorValue:
    return elementwise(a, b, "sub")


def mul(a: TensorValue, b: TensorValue) -> TensorValue:
    return elementwise(a, b, "mul")


def scale(x: TensorValue, factor: float) -> TensorValue:
    """Multiply by a constant scalar."""
    factor_t = x.dtype.type(factor)
    return record_result(
        "scale", x.data * factor_t, (x,), lambda grad: (grad * factor_t,)
    )


def shift(x: TensorValue, offset: float) -> TensorValue:
    """Add a constant scalar."""
    return record_result(
        "shift", x.data + x.dtype.type(offset), (x,), lambda grad: (grad,)
    )


def log(x: TensorValue) -> TensorValue:
    x_data = x.data
    return record_result("log", np.log(x_data), (x,), lambda grad: (grad / x_data,))


def clip(x: TensorValue, lower: float, upper: float) -> TensorValue:
    """Clamp into ``[lower, upper]``; gradient is zero where clamped."""
    inside = (x.data >= lower) & (x.data <= upper)
    return record_result(
        "clip",
        np.clip(x.data, lower, upper),
        (x,),
        lambda grad: (np.where(inside, grad, 0).astype(grad.dtype),),
    )
