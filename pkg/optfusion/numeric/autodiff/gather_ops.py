"""Row lookup (embedding gather) with scatter-add backward."""
from typing import Sequence

from numba import njit

import numpy as np

from .tensor import TensorValue, record_result


@njit(cache=True)
def scatter_add_rows_kernel(table_grad, indices, row_grads):
    """Accumulate ``row_grads[i]`` into ``table_grad[indices[i]]``.

    Sequential over ``i`` so duplicate indices accumulate in a fixed order.
    """
    num_cols = table_grad.shape[1]
    for i in range(indices.shape[0]):
        row = indices[i]
        for j in range(num_cols):
            table_grad[row, j] += row_grads[i, j]


def gather_rows(table: TensorValue, indices: Sequence[int] | np.ndarray) -> TensorValue:
    """Stack rows ``table[indices]`` into a (len(indices), e) tensor."""
    indices = np.ascontiguousarray(indices, dtype=np.int64).reshape(-1)
    num_rows = table.shape[0]
    out_of_range = (indices < 0) | (indices >= num_rows)
    if out_of_range.any():
        raise IndexError(
            f"gather_rows: index {int(indices[out_of_range][0])} out of range "
            f"for a table with {num_rows} rows"
        )
    table_shape = table.shape

    def _backward(grad):
        table_grad = np.zeros(table_shape, dtype=grad.dtype)
        scatter_add_rows_kernel(table_grad, indices, np.ascontiguousarray(grad))
        return (table_grad,)

    return record_result("gather_rows", table.data[indices], (table,), _backward)
