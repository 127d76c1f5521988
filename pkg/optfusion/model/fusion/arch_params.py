"""Architecture parameters: connection logits alpha and operation logits beta."""
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import softmax as scipy_softmax

import optfusion.numeric.autodiff as ad
from optfusion.errors import ContractError
from .component_graph import ComponentGraph
from .fusion_ops import ALL_OPS, FusionOpKind

if TYPE_CHECKING:
    from optfusion.model.architecture import ArchitectureDescriptor


ALPHA_INIT = 0.5


class ConnectionParams:
    """Connection logits over component pairs, restricted by the level mask.

    Entries outside the mask stay at zero and are never read: the forward
    pass gathers only masked-true positions, so they receive no gradient.
    """

    def __init__(
        self,
        graph: ComponentGraph,
        real_t: type = np.float32,
        init_value: float = ALPHA_INIT,
    ) -> None:
        self.graph = graph
        self.mask = graph.level_mask()
        values = np.zeros(self.mask.shape, dtype=real_t)
        values[self.mask] = init_value
        self.alpha = ad.parameter(values, name="alpha")
        self.edges: list[tuple[int, int]] = graph.valid_edges()
        num = graph.num_components
        self._flat_indices = np.array(
            [source * num + target for source, target in self.edges], dtype=np.int64
        )
        self._edge_slot = {edge: slot for slot, edge in enumerate(self.edges)}

    @classmethod
    def from_descriptor(
        cls,
        descriptor: "ArchitectureDescriptor",
        real_t: type = np.float32,
        magnitude: float = ALPHA_INIT,
    ) -> "ConnectionParams":
        """Alpha at +magnitude on the descriptor's edges, -magnitude elsewhere."""
        params = cls(descriptor.graph, real_t=real_t, init_value=-magnitude)
        connected = descriptor.connections & params.mask
        params.alpha.data[connected] = magnitude
        return params

    def _check_edge(self, source: int, target: int) -> None:
        if not self.graph.is_valid_edge(source, target):
            raise ContractError(
                f"alpha[{source}, {target}] is outside the level mask "
                "and must not be read"
            )

    def entry(self, source: int, target: int) -> float:
        self._check_edge(source, target)
        return float(self.alpha.data[source, target])

    def gate(self, source: int, target: int) -> ad.TensorValue:
        """Straight-through gate of one edge, shape (1, 1)."""
        self._check_edge(source, target)
        entry = ad.take(self.alpha, [source * self.graph.num_components + target])
        return ad.reshape(ad.ste(entry), (1, 1))

    def gates(self) -> dict[tuple[int, int], ad.TensorValue]:
        """Straight-through gates of every valid edge, each of shape (1, 1)."""
        stepped = ad.ste(ad.take(self.alpha, self._flat_indices))
        return {
            edge: ad.reshape(ad.take(stepped, [slot]), (1, 1))
            for slot, edge in enumerate(self.edges)
        }

    def connected(self) -> np.ndarray:
        """Boolean (C, C) matrix of alpha > 0 inside the mask."""
        return (self.alpha.data > 0) & self.mask


class OperationParams:
    """Operation logits, one row per candidate operation and one column per
    fusion-capable component."""

    def __init__(
        self,
        graph: ComponentGraph,
        op_set: Sequence[FusionOpKind] = ALL_OPS,
        real_t: type = np.float32,
    ) -> None:
        self.graph = graph
        self.op_set = tuple(op_set)
        self.num_columns = len(graph.fusion_capable())
        self.beta = ad.parameter(
            np.zeros((len(self.op_set), self.num_columns), dtype=real_t), name="beta"
        )

    def column(self, component_id: int) -> ad.TensorValue:
        """Logits of one component, shape (k,)."""
        col = self.graph.fusion_index(component_id)
        flat = np.arange(len(self.op_set)) * self.num_columns + col
        return ad.take(self.beta, flat)

    def probabilities(self) -> np.ndarray:
        """Column-wise softmax of beta, shape (k, F)."""
        return scipy_softmax(self.beta.data.astype(np.float64), axis=0)
