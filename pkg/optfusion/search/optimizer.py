"""Adam with bias correction and per-group learning rates."""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

import optfusion.numeric.autodiff as ad
from optfusion.errors import ContractError


@dataclass
class OptimizerState:
    """First and second moments per parameter and the shared step count."""

    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam over one or more parameter groups.

    Each group carries its own learning rate; a rate of zero freezes the
    group without changing the update of the others.
    """

    def __init__(
        self,
        groups: Sequence[tuple[Sequence[ad.TensorValue], float]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params: list[ad.TensorValue] = []
        self.learning_rates: list[float] = []
        for params, learning_rate in groups:
            if learning_rate < 0:
                raise ValueError(f"learning rate must be >= 0, got {learning_rate}")
            for param in params:
                self.params.append(param)
                self.learning_rates.append(learning_rate)
        self.state = OptimizerState(
            first_moments=[np.zeros_like(param.data) for param in self.params],
            second_moments=[np.zeros_like(param.data) for param in self.params],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    def zero_grad(self) -> None:
        ad.zero_grad(self.params)

    def step(self) -> None:
        """Apply one update from the gradients currently held by the parameters."""
        adam_step(
            self.state,
            self.params,
            [param.grad for param in self.params],
            self.learning_rates,
        )


def adam_step(
    state: OptimizerState,
    params: Sequence[ad.TensorValue],
    grads: Sequence[np.ndarray | None],
    learning_rates: float | Sequence[float],
) -> None:
    """Bias-corrected Adam update in place. Missing gradients count as zero."""
    if len(params) != len(state.first_moments) or len(grads) != len(params):
        raise ContractError(
            f"optimizer holds {len(state.first_moments)} moments for "
            f"{len(params)} parameters and {len(grads)} gradients"
        )
    if isinstance(learning_rates, (int, float)):
        learning_rates = [float(learning_rates)] * len(params)
    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for idx, (param, grad, learning_rate) in enumerate(
        zip(params, grads, learning_rates)
    ):
        first, second = state.first_moments[idx], state.second_moments[idx]
        if first.shape != param.shape:
            raise ContractError(
                f"moment of shape {first.shape} for parameter {param.name or idx} "
                f"of shape {param.shape}"
            )
        if grad is None:
            grad = np.zeros_like(param.data)
        elif grad.shape != param.shape:
            raise ContractError(
                f"gradient of shape {grad.shape} for parameter {param.name or idx} "
                f"of shape {param.shape}"
            )
        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad * grad
        if learning_rate == 0:
            continue
        update = learning_rate * (first / bias1) / (np.sqrt(second / bias2) + state.eps)
        param.data -= update.astype(param.dtype)
