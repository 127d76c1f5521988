"""Components fused by OptFusion: embedding, cross, deep and output head.

All components act on batches: a representation is a (batch, d) tensor with
the common width ``d = num_fields * emb_dim``, so any component may feed any
higher-level one without a projection.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

import optfusion.numeric.autodiff as ad
from optfusion.errors import DimensionError


@dataclass(frozen=True)
class FieldSchema:
    """Categorical field structure of the encoded input.

    Index 0 of every field is the OOV token, hence each vocabulary holds at
    least two entries.
    """

    vocab_sizes: tuple[int, ...]
    emb_dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "vocab_sizes", tuple(int(v) for v in self.vocab_sizes))
        if len(self.vocab_sizes) < 1:
            raise ValueError("FieldSchema needs at least one field")
        if any(size < 2 for size in self.vocab_sizes):
            raise ValueError(
                "Every vocabulary needs >= 2 entries (value + OOV), "
                f"got {self.vocab_sizes}"
            )
        if self.emb_dim < 1:
            raise ValueError(f"emb_dim must be positive, got {self.emb_dim}")

    @property
    def num_fields(self) -> int:
        return len(self.vocab_sizes)

    @property
    def hidden_dim(self) -> int:
        return self.num_fields * self.emb_dim


class ComponentKind(enum.Enum):
    EMBEDDING = "embedding"
    CROSS = "cross"
    DEEP = "deep"
    OUTPUT = "output"


@dataclass
class ComponentParams:
    """Weights of one component, keyed by name."""

    kind: ComponentKind
    weights: dict[str, ad.TensorValue] = field(default_factory=dict)

    def parameters(self) -> list[ad.TensorValue]:
        return list(self.weights.values())


def init_component_params(
    kind: ComponentKind,
    schema: FieldSchema,
    rng: np.random.Generator,
    real_t: type = np.float32,
    weight_scale: float = 1.0,
) -> ComponentParams:
    """Draw initial weights for a component of the given kind."""
    d = schema.hidden_dim
    e = schema.emb_dim

    def draw(shape: tuple[int, ...], std: float) -> np.ndarray:
        return (weight_scale * std * rng.standard_normal(shape)).astype(real_t)

    match kind:
        case ComponentKind.EMBEDDING:
            weights = {
                f"table_{idx}": ad.parameter(draw((vocab_size, e), 0.1))
                for idx, vocab_size in enumerate(schema.vocab_sizes)
            }
        case ComponentKind.CROSS:
            weights = {
                "w": ad.parameter(draw((d,), 1.0 / np.sqrt(d))),
                "b": ad.parameter(np.zeros(d, dtype=real_t)),
            }
        case ComponentKind.DEEP:
            # (in, out) layout, applied as x @ weight
            weights = {
                "weight": ad.parameter(draw((d, d), np.sqrt(2.0 / d))),
                "b": ad.parameter(np.zeros(d, dtype=real_t)),
            }
        case ComponentKind.OUTPUT:
            weights = {
                "w": ad.parameter(draw((d,), 1.0 / np.sqrt(d))),
                "b": ad.parameter(np.zeros(1, dtype=real_t)),
            }
        case _:
            raise ValueError(f"Invalid component kind {kind}")
    for name, tensor in weights.items():
        tensor.name = f"{kind.value}.{name}"
    return ComponentParams(kind=kind, weights=weights)


def _check_width(x: ad.TensorValue, d: int, where: str) -> None:
    if x.ndim != 2 or x.shape[1] != d:
        raise DimensionError(
            f"{where}: expected input of shape (batch, {d}), got {x.shape}"
        )


def _row_bias(bias: ad.TensorValue, batch_size: int) -> ad.TensorValue:
    return ad.broadcast_to(ad.reshape(bias, (1, bias.size)), (batch_size, bias.size))


def embedding_forward(
    schema: FieldSchema, params: ComponentParams, x: np.ndarray
) -> ad.TensorValue:
    """Look up one row per field and flatten to (batch, d), field order kept."""
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != schema.num_fields:
        raise DimensionError(
            f"embedding: expected indices of shape (batch, {schema.num_fields}), "
            f"got {x.shape}"
        )
    field_rows = []
    for idx, vocab_size in enumerate(schema.vocab_sizes):
        column = x[:, idx]
        bad = (column < 0) | (column >= vocab_size)
        if bad.any():
            raise IndexError(
                f"embedding: field {idx} index {int(column[bad][0])} outside "
                f"vocabulary of size {vocab_size}"
            )
        field_rows.append(ad.gather_rows(params.weights[f"table_{idx}"], column))
    return ad.concat(field_rows, axis=1)


def cross_layer_forward(
    params: ComponentParams, x0: ad.TensorValue, xl: ad.TensorValue
) -> ad.TensorValue:
    """CrossNet layer: x0 * (xl . w) + b + xl."""
    w, b = params.weights["w"], params.weights["b"]
    d = w.size
    _check_width(x0, d, "cross x0")
    _check_width(xl, d, "cross xl")
    batch_size = xl.shape[0]
    if x0.shape[0] != batch_size:
        raise DimensionError(f"cross: batch sizes {x0.shape} and {xl.shape} differ")
    projection = ad.matmul(xl, ad.reshape(w, (d, 1)))
    crossed = ad.mul(x0, ad.broadcast_to(projection, (batch_size, d)))
    return ad.add(ad.add(crossed, _row_bias(b, batch_size)), xl)


def deep_layer_forward(params: ComponentParams, x: ad.TensorValue) -> ad.TensorValue:
    """One ReLU layer of the MLP."""
    weight, b = params.weights["weight"], params.weights["b"]
    _check_width(x, weight.shape[0], "deep")
    return ad.relu(ad.add(ad.matmul(x, weight), _row_bias(b, x.shape[0])))


def output_forward(params: ComponentParams, x: ad.TensorValue) -> ad.TensorValue:
    """Click probability per row, shape (batch,)."""
    w, b = params.weights["w"], params.weights["b"]
    d = w.size
    _check_width(x, d, "output")
    batch_size = x.shape[0]
    logits = ad.add(
        ad.matmul(x, ad.reshape(w, (d, 1))),
        ad.broadcast_to(ad.reshape(b, (1, 1)), (batch_size, 1)),
    )
    return ad.reshape(ad.sigmoid(logits), (batch_size,))
