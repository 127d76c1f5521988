"""Minimal reverse-mode automatic differentiation over dense tensors."""
from .tensor import (
    Tape,
    TensorValue,
    backward,
    constant,
    get_active_tape,
    parameter,
    zero_grad,
)
from .elementwise_ops import add, clip, elementwise, log, mul, scale, shift, sub
from .linalg_ops import matmul
from .shape_ops import broadcast_to, concat, reshape, slice_columns, take
from .activation_ops import activations, relu, sigmoid, softmax, ste
from .reduction_ops import mean, reduce_sum
from .gather_ops import gather_rows
from .gradient_check import check_gradients, numerical_gradient
