"""Dense tensor values and the reverse-mode gradient tape."""
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from optfusion.errors import ContractError


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class TensorValue:
    """Dense real array with an optional gradient buffer and tape linkage.

    Leaves (parameters and constants) have ``node_id is None``; values produced
    by an operation recorded on a :class:`Tape` carry the index of their node
    on that tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "tape", "name")

    def __init__(
        self,
        data: np.ndarray | float | Sequence,
        requires_grad: bool = False,
        name: str = "",
        real_t: type | None = None,
    ) -> None:
        array = np.asarray(data, dtype=real_t)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None
        self.tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node_id is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "TensorValue":
        """Copy of the value without tape linkage, safe to move across threads."""
        return TensorValue(self.data.copy(), name=self.name)

    def __repr__(self) -> str:
        label = f"{self.name}, " if self.name else ""
        return (
            f"TensorValue({label}shape={self.shape}, dtype={self.dtype}, "
            f"requires_grad={self.requires_grad})"
        )


def parameter(data: np.ndarray, name: str = "") -> TensorValue:
    """Trainable leaf tensor."""
    return TensorValue(np.array(data, copy=True), requires_grad=True, name=name)


def constant(
    data: np.ndarray | float | Sequence, real_t: type | None = None
) -> TensorValue:
    """Non-trainable leaf tensor."""
    return TensorValue(data, requires_grad=False, real_t=real_t)


class _Node:
    __slots__ = ("op", "output", "parents", "backward_fn")

    def __init__(
        self,
        op: str,
        output: TensorValue,
        parents: tuple[TensorValue, ...],
        backward_fn: BackwardFn,
    ) -> None:
        self.op = op
        self.output = output
        self.parents = parents
        self.backward_fn = backward_fn


_tape_stack = threading.local()


def get_active_tape() -> "Tape | None":
    stack = getattr(_tape_stack, "tapes", None)
    return stack[-1] if stack else None


class Tape:
    """Append-only record of differentiable operations.

    Insertion order is a topological order of the computation: every parent of
    node ``i`` is either a leaf or a node with index ``< i``. A tape belongs to
    one thread and supports exactly one backward pass.

    Usage
    -----
    >>> with Tape() as tape:
    ...     loss = reduce_sum(mul(x, x))
    >>> tape.backward(loss)
    """

    def __init__(self, debug: bool = False) -> None:
        self.nodes: list[_Node] = []
        self.debug = debug
        self._consumed = False

    def __enter__(self) -> "Tape":
        if not hasattr(_tape_stack, "tapes"):
            _tape_stack.tapes = []
        _tape_stack.tapes.append(self)
        return self

    def __exit__(self, *exc_info) -> None:
        _tape_stack.tapes.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(
        self,
        op: str,
        output: TensorValue,
        parents: tuple[TensorValue, ...],
        backward_fn: BackwardFn,
    ) -> None:
        if self._consumed:
            raise ContractError("Cannot record on a tape that has been consumed")
        node_id = len(self.nodes)
        for parent in parents:
            if parent.tape is self and parent.node_id >= node_id:  # type: ignore
                raise ContractError(f"{op}: parent recorded after its child")
        output.node_id = node_id
        output.tape = self
        output.requires_grad = True
        self.nodes.append(_Node(op, output, parents, backward_fn))

    def backward(self, loss: TensorValue) -> None:
        """Populate ``grad`` of every trainable leaf reachable from ``loss``."""
        if loss.size != 1:
            raise ContractError(
                f"backward needs a scalar loss, got shape {loss.shape}"
            )
        if self._consumed:
            raise ContractError(
                "backward was already called on this tape; record a new one"
            )
        self._consumed = True
        seed = np.ones_like(loss.data)
        if loss.node_id is None:
            if loss.requires_grad:
                _accumulate_leaf_grad(loss, seed)
            return
        if loss.tape is not self:
            raise ContractError("loss was recorded on a different tape")

        grads: dict[int, np.ndarray] = {loss.node_id: seed}
        # strictly decreasing node index
        for node_id in range(loss.node_id, -1, -1):
            upstream = grads.pop(node_id, None)
            if upstream is None:
                continue
            node = self.nodes[node_id]
            parent_grads = node.backward_fn(upstream)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent.tape is self and parent.node_id is not None:
                    existing = grads.get(parent.node_id)
                    grads[parent.node_id] = (
                        parent_grad if existing is None else existing + parent_grad
                    )
                elif parent.node_id is None:
                    _accumulate_leaf_grad(parent, parent_grad)


def _accumulate_leaf_grad(leaf: TensorValue, grad: np.ndarray) -> None:
    if grad.shape != leaf.shape:
        raise ContractError(
            f"gradient of shape {grad.shape} for leaf {leaf!r} of shape {leaf.shape}"
        )
    if leaf.grad is None:
        leaf.grad = np.array(grad, dtype=leaf.dtype, copy=True)
    else:
        leaf.grad += grad


def record_result(
    op: str,
    data: np.ndarray,
    parents: tuple[TensorValue, ...],
    backward_fn: BackwardFn,
) -> TensorValue:
    """Wrap an op output and record it on the active tape when needed."""
    output = TensorValue(data)
    tape = get_active_tape()
    if tape is None:
        return output
    if tape.debug and np.isnan(output.data).any():
        if all(np.isfinite(parent.data).all() for parent in parents):
            raise FloatingPointError(f"{op} produced NaN from finite inputs")
    if any(parent.requires_grad for parent in parents):
        tape.record(op, output, parents, backward_fn)
    return output


def backward(loss: TensorValue) -> None:
    """Run the backward pass of the tape that recorded ``loss``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape if loss.tape is not None else get_active_tape()
    if tape is None:
        raise ContractError("loss was not computed under a Tape")
    tape.backward(loss)


def zero_grad(params: Iterable[TensorValue]) -> None:
    """Reset accumulated gradients between optimisation steps."""
    for param in params:
        param.grad = None
