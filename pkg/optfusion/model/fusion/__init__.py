"""Fusion search space: component graph, architecture parameters, operations."""
from .component_graph import Component, ComponentGraph
from .counting import (
    count_valid_connections,
    enumerate_valid_connections,
    search_space_size,
)
from .fusion_ops import (
    ALL_OPS,
    PARAMETER_FREE_OPS,
    FusionOpKind,
    FusionOpParams,
    GatedInput,
    attention_coefficients,
    canonical_op_set,
    fuse,
    init_fusion_op_params,
    make_gate,
    mix_operations,
    mix_with_probabilities,
)
from .arch_params import ALPHA_INIT, ConnectionParams, OperationParams
