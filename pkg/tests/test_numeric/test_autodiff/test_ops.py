import numpy as np

import pytest

import optfusion.numeric.autodiff as ad
from optfusion.errors import DegenerateMaskError, DimensionError, EmptyFusionError
from optfusion.utils.precision import get_real_t, get_test_tol


def _grad_of(fn, *tensors):
    with ad.Tape() as tape:
        loss = fn(*tensors)
    tape.backward(loss)
    return [tensor.grad for tensor in tensors]


@pytest.mark.parametrize("precision", ["single", "double"])
def test_elementwise_values(precision):
    real_t = get_real_t(precision)
    a = ad.constant(np.array([1.0, 2.0]), real_t)
    b = ad.constant(np.array([3.0, 5.0]), real_t)
    np.testing.assert_allclose(ad.add(a, b).data, [4.0, 7.0])
    np.testing.assert_allclose(ad.sub(a, b).data, [-2.0, -3.0])
    np.testing.assert_allclose(ad.mul(a, b).data, [3.0, 10.0])
    np.testing.assert_allclose(ad.shift(a, 1.0).data, [2.0, 3.0])
    assert ad.scale(a, 0.5).dtype == real_t


def test_elementwise_rejects_implicit_broadcast():
    with pytest.raises(DimensionError, match="differ"):
        ad.add(ad.constant(np.ones((2, 3))), ad.constant(np.ones((1, 3))))


def test_invalid_elementwise_kind():
    x = ad.constant(np.ones(2))
    with pytest.raises(ValueError, match="Invalid elementwise kind"):
        ad.elementwise(x, x, "div")


def test_clip_gradient_is_zero_where_clamped():
    x = ad.parameter(np.array([-1.0, 0.5, 2.0]))
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.clip(t, 0.0, 1.0)), x)
    np.testing.assert_allclose(grad, [0.0, 1.0, 0.0])


def test_relu_and_sigmoid():
    x = ad.parameter(np.array([-2.0, 0.0, 3.0]))
    np.testing.assert_allclose(ad.relu(x).data, [0.0, 0.0, 3.0])
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.relu(t)), x)
    np.testing.assert_allclose(grad, [0.0, 0.0, 1.0])
    big = ad.constant(np.array([-800.0, 800.0]))
    np.testing.assert_allclose(ad.sigmoid(big).data, [0.0, 1.0])


def test_ste_forward_is_step_backward_is_identity():
    x = ad.parameter(np.array([-0.3, 0.0, 0.7]))
    np.testing.assert_allclose(ad.ste(x).data, [0.0, 0.0, 1.0])
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.scale(ad.ste(t), 2.0)), x)
    np.testing.assert_allclose(grad, [2.0, 2.0, 2.0])


def test_ste_on_random_values_passes_gradient_unchanged():
    values = np.random.default_rng(0).uniform(-1.0, 1.0, 1000)
    upstream = np.random.default_rng(1).standard_normal(1000)
    x = ad.parameter(values)
    np.testing.assert_array_equal(ad.ste(x).data, (values > 0).astype(float))
    weights = ad.constant(upstream)
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.mul(ad.ste(t), weights)), x)
    np.testing.assert_array_equal(grad, upstream)


@pytest.mark.parametrize("precision", ["single", "double"])
def test_softmax_masks_neg_inf(precision):
    real_t = get_real_t(precision)
    logits = ad.parameter(np.array([[0.0, -np.inf, 0.0]], dtype=real_t))
    probs = ad.softmax(logits)
    tol = get_test_tol(precision)
    np.testing.assert_allclose(probs.data, [[0.5, 0.0, 0.5]], atol=tol)
    weights = ad.constant(np.array([[1.0, 7.0, 3.0]], dtype=real_t))
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.mul(ad.softmax(t), weights)), logits)
    assert grad[0, 1] == 0.0
    np.testing.assert_allclose(grad[0], [-0.5, 0.0, 0.5], atol=tol)


def test_softmax_all_masked_row_raises():
    with pytest.raises(DegenerateMaskError):
        ad.softmax(ad.constant(np.array([[-np.inf, -np.inf]])))


def test_concat_and_split_gradient():
    a = ad.parameter(np.ones((2, 1)))
    b = ad.parameter(np.ones((2, 3)))
    out = ad.concat([a, b], axis=1)
    assert out.shape == (2, 4)
    weights = ad.constant(np.arange(8.0).reshape(2, 4))
    grad_a, grad_b = _grad_of(
        lambda x, y: ad.reduce_sum(ad.mul(ad.concat([x, y], axis=1), weights)), a, b
    )
    np.testing.assert_allclose(grad_a, [[0.0], [4.0]])
    np.testing.assert_allclose(grad_b, [[1.0, 2.0, 3.0], [5.0, 6.0, 7.0]])


def test_concat_errors():
    with pytest.raises(EmptyFusionError):
        ad.concat([])
    with pytest.raises(DimensionError, match="off axis"):
        ad.concat([ad.constant(np.ones((2, 1))), ad.constant(np.ones((3, 1)))], axis=1)


def test_broadcast_to_sums_back():
    x = ad.parameter(np.array([[1.0, 2.0]]))
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.broadcast_to(t, (3, 2))), x)
    np.testing.assert_allclose(grad, [[3.0, 3.0]])
    with pytest.raises(DimensionError):
        ad.broadcast_to(x, (3, 3))


def test_slice_columns_and_take():
    x = ad.parameter(np.arange(6.0).reshape(2, 3))
    np.testing.assert_allclose(ad.slice_columns(x, 1, 3).data, [[1.0, 2.0], [4.0, 5.0]])
    with pytest.raises(DimensionError):
        ad.slice_columns(x, 2, 2)
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.take(t, [0, 0, 5])), x)
    np.testing.assert_allclose(grad, [[2.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(IndexError):
        ad.take(x, [6])


def test_matmul_shapes():
    a = ad.constant(np.ones((2, 3)))
    b = ad.constant(np.ones((3, 4)))
    assert ad.matmul(a, b).shape == (2, 4)
    with pytest.raises(DimensionError):
        ad.matmul(b, b)


def test_reductions():
    x = ad.parameter(np.arange(6.0).reshape(2, 3))
    np.testing.assert_allclose(ad.reduce_sum(x, axis=1).data, [3.0, 12.0])
    np.testing.assert_allclose(ad.mean(x).data, 2.5)
    (grad,) = _grad_of(lambda t: ad.mean(t), x)
    np.testing.assert_allclose(grad, np.full((2, 3), 1 / 6))


def test_gather_rows_duplicate_indices_accumulate():
    table = ad.parameter(np.arange(8.0).reshape(4, 2))
    rows = ad.gather_rows(table, [3, 1, 3])
    np.testing.assert_allclose(rows.data, [[6.0, 7.0], [2.0, 3.0], [6.0, 7.0]])
    (grad,) = _grad_of(lambda t: ad.reduce_sum(ad.gather_rows(t, [3, 1, 3])), table)
    np.testing.assert_allclose(grad, [[0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])
    with pytest.raises(IndexError, match="out of range"):
        ad.gather_rows(table, [4])
