import numpy as np

import pytest

import optfusion.numeric.autodiff as ad
from optfusion.errors import ContractError
from optfusion.search import Adam, OptimizerState, adam_step


def _reference_adam(param, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    first = np.zeros_like(param)
    second = np.zeros_like(param)
    for step, grad in enumerate(grads, start=1):
        first = beta1 * first + (1 - beta1) * grad
        second = beta2 * second + (1 - beta2) * grad**2
        first_hat = first / (1 - beta1**step)
        second_hat = second / (1 - beta2**step)
        param = param - lr * first_hat / (np.sqrt(second_hat) + eps)
    return param


def test_adam_matches_reference_updates():
    rng = np.random.default_rng(0)
    initial = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(4)]
    weight = ad.parameter(initial)
    optimizer = Adam([([weight], 1e-2)])
    for grad in grads:
        weight.grad = grad.copy()
        optimizer.step()
    np.testing.assert_allclose(
        weight.data, _reference_adam(initial, grads, 1e-2), rtol=1e-12
    )
    assert optimizer.state.step == 4


def test_first_step_moves_by_learning_rate():
    weight = ad.parameter(np.array([1.0, -1.0]))
    optimizer = Adam([([weight], 0.1)])
    weight.grad = np.array([3.0, -0.5])
    optimizer.step()
    np.testing.assert_allclose(weight.data, [0.9, -0.9], rtol=1e-6)


def test_zero_learning_rate_freezes_group_only():
    frozen = ad.parameter(np.ones(2))
    trained = ad.parameter(np.ones(2))
    optimizer = Adam([([trained], 0.1), ([frozen], 0.0)])
    frozen.grad = np.ones(2)
    trained.grad = np.ones(2)
    optimizer.step()
    np.testing.assert_array_equal(frozen.data, 1.0)
    assert np.all(trained.data < 1.0)
    # moments still track the frozen gradient
    np.testing.assert_allclose(optimizer.state.first_moments[1], 0.1)


def test_missing_gradient_counts_as_zero():
    weight = ad.parameter(np.ones(3))
    optimizer = Adam([([weight], 0.1)])
    optimizer.zero_grad()
    optimizer.step()
    np.testing.assert_array_equal(weight.data, 1.0)


def test_optimizer_descends_quadratic():
    weight = ad.parameter(np.array([3.0, -2.0]))
    optimizer = Adam([([weight], 0.1)])
    for _ in range(500):
        optimizer.zero_grad()
        with ad.Tape() as tape:
            loss = ad.reduce_sum(ad.mul(weight, weight))
        tape.backward(loss)
        optimizer.step()
    np.testing.assert_allclose(weight.data, 0.0, atol=0.1)


def test_contract_errors():
    weight = ad.parameter(np.ones(2))
    state = OptimizerState([np.zeros(2)], [np.zeros(2)])
    with pytest.raises(ContractError, match="moments"):
        adam_step(state, [weight, weight], [None, None], 0.1)
    with pytest.raises(ContractError, match="gradient of shape"):
        adam_step(state, [weight], [np.ones(3)], 0.1)
    with pytest.raises(ValueError, match="learning rate"):
        Adam([([weight], -1.0)])
