"""The OptFusion supernet: components wired by gated, operation-mixed fusion."""
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

import optfusion.numeric.autodiff as ad
from optfusion.errors import ArchitectureSchemaError, ContractError, DimensionError
from optfusion.model.architecture import (
    ArchitectureDescriptor,
    descriptor_logits,
    discretize,
)
from optfusion.model.components import (
    ComponentKind,
    ComponentParams,
    FieldSchema,
    cross_layer_forward,
    deep_layer_forward,
    embedding_forward,
    init_component_params,
    output_forward,
)
from optfusion.model.fusion import (
    ALL_OPS,
    ComponentGraph,
    ConnectionParams,
    FusionOpKind,
    FusionOpParams,
    OperationParams,
    canonical_op_set,
    fuse,
    init_fusion_op_params,
    make_gate,
    mix_operations,
    mix_with_probabilities,
)

SupernetMode = Literal["search", "retrain_soft", "retrain_hard", "fixed"]
SUPERNET_MODES: tuple[str, ...] = ("search", "retrain_soft", "retrain_hard", "fixed")


@dataclass
class SupernetConfig:
    """Structure of the supernet.

    ``search`` learns alpha and beta; ``retrain_soft`` keeps the discretised
    connections and mixes operations with fixed probabilities;
    ``retrain_hard`` and ``fixed`` apply one operation per component.
    Every mode but ``search`` needs an :class:`ArchitectureDescriptor`.
    """

    n: int = 3
    emb_dim: int = 8
    with_s0: bool = True
    mode: str = "search"
    op_set: tuple[FusionOpKind, ...] = field(default=ALL_OPS)
    weight_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.emb_dim < 1:
            raise ValueError(f"emb_dim must be >= 1, got {self.emb_dim}")
        if self.mode not in SUPERNET_MODES:
            raise ValueError(f"mode must be one of {SUPERNET_MODES}, got {self.mode!r}")
        if self.weight_scale < 0:
            raise ValueError("weight_scale must be non-negative")
        self.op_set = canonical_op_set(self.op_set)


class OptFusionSupernet:
    """Differentiable model over all candidate fusions.

    Components are evaluated in id order, which is topological under the
    level mask. Every fusing component sees one slot per possible
    predecessor; closed slots act as absent inputs for the chosen operation.

    Attributes
    ----------
    graph: ComponentGraph
    components: dict
        Component id to :class:`ComponentParams`.
    fusion_params: dict
        Fusing component id to :class:`FusionOpParams`.
    connections: ConnectionParams
        Alpha; trainable in search mode only.
    operations: OperationParams
        Beta; trainable in search mode only.
    """

    def __init__(
        self,
        config: SupernetConfig,
        schema: FieldSchema,
        descriptor: ArchitectureDescriptor | None = None,
        seed: int = 0,
        real_t: type = np.float32,
    ) -> None:
        if schema.emb_dim != config.emb_dim:
            raise ValueError(
                f"schema emb_dim {schema.emb_dim} differs from config {config.emb_dim}"
            )
        if config.mode != "search" and descriptor is None:
            raise ValueError(
                f"mode {config.mode!r} requires an architecture descriptor"
            )
        if descriptor is not None and (
            descriptor.n != config.n or descriptor.with_s0 != config.with_s0
        ):
            raise ArchitectureSchemaError(
                f"descriptor (n={descriptor.n}, with_s0={descriptor.with_s0}) does not "
                f"match config (n={config.n}, with_s0={config.with_s0})"
            )
        self.config = config
        self.schema = schema
        self.real_t = real_t
        self.seed = seed
        self.graph = ComponentGraph(config.n, with_s0=config.with_s0)
        self.mode = config.mode

        self.descriptor: ArchitectureDescriptor | None = None
        self._soft_probabilities: dict[int, ad.TensorValue] = {}
        if descriptor is not None:
            self.descriptor = (
                descriptor.to_soft()
                if self.mode == "retrain_soft"
                else descriptor.to_hard()
            )
            self.op_set = self.descriptor.op_set
        else:
            self.op_set = config.op_set

        rng = np.random.default_rng(seed)
        self.components: dict[int, ComponentParams] = {
            component.id: init_component_params(
                component.kind, schema, rng, real_t, config.weight_scale
            )
            for component in self.graph.components
        }
        self.fusion_params: dict[int, FusionOpParams] = {
            component.id: init_fusion_op_params(
                len(self.graph.predecessors(component.id)),
                schema.hidden_dim,
                self.op_set,
                rng,
                real_t,
                config.weight_scale,
            )
            for component in self.graph.fusion_capable()
        }
        for component in self.graph.fusion_capable():
            for name, tensor in self.fusion_params[component.id].weights.items():
                tensor.name = f"{component.name}.fusion.{name}"

        if self.descriptor is None:
            self.connections = ConnectionParams(self.graph, real_t=real_t)
            self.operations = OperationParams(self.graph, self.op_set, real_t=real_t)
        else:
            self.connections = ConnectionParams.from_descriptor(self.descriptor, real_t)
            self.operations = OperationParams(self.graph, self.op_set, real_t=real_t)
            _, beta = descriptor_logits(self.descriptor)
            self.operations.beta.data[...] = beta
            for component in self.graph.fusion_capable():
                self._soft_probabilities[component.id] = ad.constant(
                    self.descriptor.probabilities_of(component.id), real_t=real_t
                )
            self.connections.alpha.requires_grad = False
            self.operations.beta.requires_grad = False

        log = logging.getLogger(__name__)
        log.warning(
            "==============================================="
            f"\nOptFusion supernet ({self.mode}) initialized with:"
            f"\n{self.graph.num_components} components, n={config.n}, "
            f"S0={'on' if config.with_s0 else 'off'}"
            f"\nhidden width d={schema.hidden_dim} ({schema.num_fields} fields x "
            f"{schema.emb_dim})"
            f"\noperations {[op.value for op in self.op_set]}"
            f"\n{self.num_parameters()} model parameters"
            "\n==============================================="
        )

    def model_parameters(self) -> list[ad.TensorValue]:
        """Theta: component weights and fusion mixers, in component order."""
        params: list[ad.TensorValue] = []
        for component in self.graph.components:
            params.extend(self.components[component.id].parameters())
            if component.id in self.fusion_params:
                params.extend(self.fusion_params[component.id].parameters())
        return params

    def architecture_parameters(self) -> list[ad.TensorValue]:
        """Alpha and beta while they are trainable, otherwise empty."""
        if self.mode != "search":
            return []
        return [self.connections.alpha, self.operations.beta]

    def num_parameters(self) -> int:
        return int(sum(param.size for param in self.model_parameters()))

    def _gates(self) -> dict[tuple[int, int], ad.TensorValue]:
        if self.mode == "search":
            return self.connections.gates()
        assert self.descriptor is not None
        open_gate = make_gate(1.0, self.real_t)
        shut_gate = make_gate(0.0, self.real_t)
        return {
            (source, target): (
                open_gate if self.descriptor.connections[source, target] else shut_gate
            )
            for source, target in self.graph.valid_edges()
        }

    def _fuse(self, component_id: int, gated_inputs) -> ad.TensorValue:
        params = self.fusion_params[component_id]
        match self.mode:
            case "search":
                return mix_operations(
                    self.operations.column(component_id),
                    gated_inputs,
                    params,
                    self.op_set,
                )
            case "retrain_soft":
                return mix_with_probabilities(
                    self._soft_probabilities[component_id],
                    gated_inputs,
                    params,
                    self.op_set,
                )
            case _:
                assert self.descriptor is not None
                op = self.descriptor.operation_of(component_id)
                return fuse(op, gated_inputs, params)

    def forward(self, x: np.ndarray) -> ad.TensorValue:
        """Click probabilities of a batch of encoded rows, shape (batch,)."""
        embedding = embedding_forward(
            self.schema, self.components[self.graph.embedding.id], x
        )
        outputs: dict[int, ad.TensorValue] = {self.graph.embedding.id: embedding}
        gates = self._gates()
        for component in self.graph.fusion_capable():
            gated_inputs = [
                (gates[(source, component.id)], outputs[source])
                for source in self.graph.predecessors(component.id)
            ]
            fused = self._fuse(component.id, gated_inputs)
            params = self.components[component.id]
            match component.kind:
                case ComponentKind.CROSS:
                    outputs[component.id] = cross_layer_forward(
                        params, embedding, fused
                    )
                case ComponentKind.DEEP:
                    outputs[component.id] = deep_layer_forward(params, fused)
                case ComponentKind.OUTPUT:
                    outputs[component.id] = output_forward(params, fused)
        return outputs[self.graph.output.id]

    __call__ = forward

    def predict_proba(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        """Probabilities for many rows, evaluated batch by batch without a tape."""
        x = np.asarray(x, dtype=np.int64)
        if x.ndim != 2:
            raise DimensionError(f"expected (rows, fields) indices, got {x.shape}")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if ad.get_active_tape() is not None:
            raise ContractError("predict_proba must not run under an active Tape")
        scores = [
            self.forward(x[start : start + batch_size]).data.astype(np.float64)
            for start in range(0, x.shape[0], batch_size)
        ]
        return np.concatenate(scores) if scores else np.zeros(0)

    def discretize(
        self, variant: Literal["hard", "soft"] = "hard", metadata: dict | None = None
    ) -> ArchitectureDescriptor:
        return discretize(
            self.connections.alpha.data,
            self.operations.beta.data,
            self.graph,
            self.op_set,
            variant,
            metadata,
        )

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of every tensor, keyed ``<component>/<weight>``."""
        tensors = self._named_tensors()
        return {key: tensor.data.copy() for key, tensor in tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        tensors = self._named_tensors()
        missing = sorted(set(tensors) - set(state))
        if missing:
            raise ContractError(f"state is missing {missing}")
        for key, tensor in tensors.items():
            value = np.asarray(state[key])
            if value.shape != tensor.shape:
                raise ContractError(
                    f"{key}: stored shape {value.shape} "
                    f"!= parameter shape {tensor.shape}"
                )
            tensor.data[...] = value

    def _named_tensors(self) -> dict[str, ad.TensorValue]:
        tensors: dict[str, ad.TensorValue] = {}
        for component in self.graph.components:
            for name, tensor in self.components[component.id].weights.items():
                tensors[f"{component.name}/{name}"] = tensor
            if component.id in self.fusion_params:
                for name, tensor in self.fusion_params[component.id].weights.items():
                    tensors[f"{component.name}/fusion/{name}"] = tensor
        tensors["arch/alpha"] = self.connections.alpha
        tensors["arch/beta"] = self.operations.beta
        return tensors


def build_supernet(
    config: SupernetConfig,
    schema: FieldSchema,
    descriptor: ArchitectureDescriptor | None = None,
    seed: int = 0,
    real_t: type = np.float32,
    op_override: FusionOpKind | str | None = None,
) -> OptFusionSupernet:
    """Supernet for ``config``; ``op_override`` forces one operation everywhere."""
    if op_override is not None:
        if descriptor is None:
            raise ValueError("op_override needs an architecture descriptor")
        descriptor = descriptor.with_uniform_operation(op_override)
    return OptFusionSupernet(config, schema, descriptor, seed=seed, real_t=real_t)

