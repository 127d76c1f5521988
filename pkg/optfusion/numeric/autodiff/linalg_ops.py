"""Matrix product."""
from optfusion.errors import DimensionError
from .tensor import TensorValue, record_result


def matmul(a: TensorValue, b: TensorValue) -> TensorValue:
    """Product of an (m, k) and a (k, n) matrix."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    a_data, b_data = a.data, b.data

    def _backward(grad):
        return grad @ b_data.T, a_data.T @ grad

    return record_result("matmul", a_data @ b_data, (a, b), _backward)
