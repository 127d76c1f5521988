"""Fusion operations over gated component outputs.

A gated input is a pair ``(gate, e)`` with ``gate`` a (1, 1) tensor valued in
{0, 1} and ``e`` a (batch, d) representation. Every operation treats a gate
of 0 as "input absent": ADD and CONCAT see zeros, PROD sees the
multiplicative identity, ATT masks the slot's logit to -inf.
"""
import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

import optfusion.numeric.autodiff as ad
from optfusion.errors import DegenerateMaskError, DimensionError, EmptyFusionError


class FusionOpKind(enum.Enum):
    """Candidate operations, in their fixed tie-breaking order."""

    ADD = "ADD"
    PROD = "PROD"
    CONCAT = "CONCAT"
    ATT = "ATT"

    @property
    def index(self) -> int:
        return ALL_OPS.index(self)

    @classmethod
    def parse(cls, value: "str | FusionOpKind") -> "FusionOpKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(
                f"Unknown fusion operation {value!r}; expected one of "
                f"{[op.value for op in cls]}"
            ) from None


ALL_OPS: tuple[FusionOpKind, ...] = tuple(FusionOpKind)
PARAMETER_FREE_OPS = frozenset({FusionOpKind.ADD, FusionOpKind.PROD})


def canonical_op_set(
    ops: Iterable["str | FusionOpKind"] | None,
) -> tuple[FusionOpKind, ...]:
    """Deduplicate and order an operation subset; ``None`` means all four."""
    if ops is None:
        return ALL_OPS
    chosen = {FusionOpKind.parse(op) for op in ops}
    if not chosen:
        raise ValueError("Operation set must not be empty")
    return tuple(op for op in ALL_OPS if op in chosen)


GatedInput = tuple[ad.TensorValue, ad.TensorValue]


@dataclass
class FusionOpParams:
    """Learned mixers of one component.

    CONCAT holds a (num_slots * d, d) matrix, one row block per predecessor
    slot, so its shape stays fixed while gates change. ATT holds W1 (d, d),
    b1 (d,) and w2 (d,).
    """

    num_slots: int
    weights: dict[str, ad.TensorValue] = field(default_factory=dict)

    def parameters(self) -> list[ad.TensorValue]:
        return list(self.weights.values())


def init_fusion_op_params(
    num_slots: int,
    d: int,
    op_set: Sequence[FusionOpKind],
    rng: np.random.Generator,
    real_t: type = np.float32,
    weight_scale: float = 1.0,
) -> FusionOpParams:
    weights: dict[str, ad.TensorValue] = {}
    if FusionOpKind.CONCAT in op_set:
        weights["concat_weight"] = ad.parameter(
            (
                weight_scale / np.sqrt(d) * rng.standard_normal((num_slots * d, d))
            ).astype(real_t),
            name="concat_weight",
        )
    if FusionOpKind.ATT in op_set:
        weights["att_w1"] = ad.parameter(
            (weight_scale / np.sqrt(d) * rng.standard_normal((d, d))).astype(real_t),
            name="att_w1",
        )
        weights["att_b1"] = ad.parameter(np.zeros(d, dtype=real_t), name="att_b1")
        weights["att_w2"] = ad.parameter(
            (weight_scale / np.sqrt(d) * rng.standard_normal(d)).astype(real_t),
            name="att_w2",
        )
    return FusionOpParams(num_slots=num_slots, weights=weights)


def make_gate(value: float, real_t: type = np.float32) -> ad.TensorValue:
    """Constant (1, 1) gate for fixed architectures."""
    return ad.constant(np.full((1, 1), value, dtype=real_t))


def _is_open(gate: ad.TensorValue) -> bool:
    return bool(gate.data.reshape(-1)[0] > 0)


def _is_frozen_shut(gate: ad.TensorValue) -> bool:
    """A constant closed gate; its input can be skipped entirely."""
    return not gate.requires_grad and not _is_open(gate)


def _check_inputs(gated_inputs: Sequence[GatedInput]) -> tuple[int, int]:
    if len(gated_inputs) == 0:
        raise EmptyFusionError("fuse received an empty predecessor slot list")
    batch_size, d = gated_inputs[0][1].shape
    for gate, representation in gated_inputs:
        if representation.shape != (batch_size, d):
            raise DimensionError(
                f"fuse: representation {representation.shape} does not match "
                f"{(batch_size, d)}"
            )
        if gate.shape != (1, 1):
            raise DimensionError(f"fuse: gate must have shape (1, 1), got {gate.shape}")
    return batch_size, d


def _apply_gate(gate: ad.TensorValue, representation: ad.TensorValue) -> ad.TensorValue:
    return ad.mul(ad.broadcast_to(gate, representation.shape), representation)


def _zeros(batch_size: int, d: int, real_t: type) -> ad.TensorValue:
    return ad.constant(np.zeros((batch_size, d), dtype=real_t))


def _fuse_add(
    gated_inputs: Sequence[GatedInput], batch_size: int, d: int, real_t: type
):
    terms = [
        _apply_gate(gate, representation)
        for gate, representation in gated_inputs
        if not _is_frozen_shut(gate)
    ]
    if not terms:
        return _zeros(batch_size, d, real_t)
    fused = terms[0]
    for term in terms[1:]:
        fused = ad.add(fused, term)
    return fused


def _fuse_prod(
    gated_inputs: Sequence[GatedInput], batch_size: int, d: int, real_t: type
):
    # 1 + g * (e - 1): a closed gate contributes the multiplicative identity
    terms = [
        ad.shift(
            ad.mul(
                ad.broadcast_to(gate, (batch_size, d)),
                ad.shift(representation, -1.0),
            ),
            1.0,
        )
        for gate, representation in gated_inputs
        if not _is_frozen_shut(gate)
    ]
    if not terms:
        return ad.constant(np.ones((batch_size, d), dtype=real_t))
    fused = terms[0]
    for term in terms[1:]:
        fused = ad.mul(fused, term)
    return fused


def _fuse_concat(
    gated_inputs: Sequence[GatedInput],
    params: FusionOpParams,
    batch_size: int,
    d: int,
    real_t: type,
):
    if len(gated_inputs) != params.num_slots:
        raise DimensionError(
            f"CONCAT: {len(gated_inputs)} inputs for {params.num_slots} slots"
        )
    slots = [
        _zeros(batch_size, d, real_t)
        if _is_frozen_shut(gate)
        else _apply_gate(gate, representation)
        for gate, representation in gated_inputs
    ]
    return ad.matmul(ad.concat(slots, axis=1), params.weights["concat_weight"])


def attention_coefficients(
    params: FusionOpParams,
    inputs: Sequence[ad.TensorValue],
    gates: Sequence[ad.TensorValue],
) -> ad.TensorValue:
    """Softmax attention weights over slots, shape (batch, len(inputs)).

    Logit of slot i is ``w2 . relu(W1 x_i + b1)`` with ``x_i = g_i * e_i``;
    closed slots get a -inf logit and so exactly zero weight. Raises
    :class:`DegenerateMaskError` when every slot is closed.
    """
    if len(inputs) != len(gates):
        raise DimensionError("attention: inputs and gates differ in length")
    if len(inputs) == 0:
        raise EmptyFusionError("attention over no inputs")
    if not any(_is_open(gate) for gate in gates):
        raise DegenerateMaskError("attention: every input is gated out")
    w1 = params.weights["att_w1"]
    b1 = params.weights["att_b1"]
    w2 = params.weights["att_w2"]
    d = w1.shape[0]
    batch_size = inputs[0].shape[0]
    b1_rows = ad.broadcast_to(ad.reshape(b1, (1, d)), (batch_size, d))
    w2_column = ad.reshape(w2, (d, 1))
    logit_columns = []
    for gate, representation in zip(gates, inputs):
        if _is_open(gate):
            hidden = ad.relu(
                ad.add(ad.matmul(_apply_gate(gate, representation), w1), b1_rows)
            )
            logit_columns.append(ad.matmul(hidden, w2_column))
        else:
            logit_columns.append(
                ad.constant(np.full((batch_size, 1), -np.inf, dtype=w1.dtype))
            )
    return ad.softmax(ad.concat(logit_columns, axis=1))


def _fuse_att(
    gated_inputs: Sequence[GatedInput],
    params: FusionOpParams,
    batch_size: int,
    d: int,
    real_t: type,
):
    gates = [gate for gate, _ in gated_inputs]
    inputs = [representation for _, representation in gated_inputs]
    try:
        coefficients = attention_coefficients(params, inputs, gates)
    except DegenerateMaskError:
        return _zeros(batch_size, d, real_t)
    fused = None
    for slot, (gate, representation) in enumerate(gated_inputs):
        if not _is_open(gate):
            continue
        weight = ad.broadcast_to(
            ad.slice_columns(coefficients, slot, slot + 1), (batch_size, d)
        )
        term = ad.mul(weight, _apply_gate(gate, representation))
        fused = term if fused is None else ad.add(fused, term)
    return fused


def fuse(
    kind: FusionOpKind,
    gated_inputs: Sequence[GatedInput],
    params: FusionOpParams | None = None,
) -> ad.TensorValue:
    """Fuse gated inputs with one operation.

    ``gated_inputs`` covers every predecessor slot of the component in id
    order. ADD and PROD are order-invariant; CONCAT is not.
    """
    batch_size, d = _check_inputs(gated_inputs)
    real_t = gated_inputs[0][1].dtype.type
    match kind:
        case FusionOpKind.ADD:
            return _fuse_add(gated_inputs, batch_size, d, real_t)
        case FusionOpKind.PROD:
            return _fuse_prod(gated_inputs, batch_size, d, real_t)
        case FusionOpKind.CONCAT:
            if params is None:
                raise ValueError("CONCAT needs fusion parameters")
            return _fuse_concat(gated_inputs, params, batch_size, d, real_t)
        case FusionOpKind.ATT:
            if params is None:
                raise ValueError("ATT needs fusion parameters")
            return _fuse_att(gated_inputs, params, batch_size, d, real_t)
        case _:
            raise ValueError(f"Invalid fusion operation {kind}")


def mix_with_probabilities(
    probabilities: ad.TensorValue,
    gated_inputs: Sequence[GatedInput],
    params: FusionOpParams | None,
    op_set: Sequence[FusionOpKind] = ALL_OPS,
) -> ad.TensorValue:
    """Sum over operations of ``p[o] * fuse(o, gated_inputs)``."""
    if probabilities.shape != (len(op_set),):
        raise DimensionError(
            f"mix: {probabilities.shape} probabilities for {len(op_set)} operations"
        )
    batch_size, d = _check_inputs(gated_inputs)
    mixed = None
    for op_idx, kind in enumerate(op_set):
        weight = ad.broadcast_to(
            ad.reshape(ad.take(probabilities, [op_idx]), (1, 1)), (batch_size, d)
        )
        term = ad.mul(weight, fuse(kind, gated_inputs, params))
        mixed = term if mixed is None else ad.add(mixed, term)
    return mixed  # type: ignore


def mix_operations(
    beta_col: ad.TensorValue,
    gated_inputs: Sequence[GatedInput],
    params: FusionOpParams | None,
    op_set: Sequence[FusionOpKind] = ALL_OPS,
) -> ad.TensorValue:
    """Operation mixture weighted by ``softmax(beta_col)``."""
    return mix_with_probabilities(ad.softmax(beta_col), gated_inputs, params, op_set)
