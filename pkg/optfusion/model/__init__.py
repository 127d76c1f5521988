"""Components, fusion search space and the assembled supernet."""
from .components import (
    ComponentKind,
    ComponentParams,
    FieldSchema,
    cross_layer_forward,
    deep_layer_forward,
    embedding_forward,
    init_component_params,
    output_forward,
)
from .fusion import (
    ALL_OPS,
    ComponentGraph,
    ConnectionParams,
    FusionOpKind,
    OperationParams,
    count_valid_connections,
    enumerate_valid_connections,
    fuse,
    mix_operations,
    search_space_size,
)
from .architecture import (
    ArchitectureDescriptor,
    descriptor_logits,
    deserialize,
    discretize,
    export_dot,
    load_descriptor,
    preset,
    save_descriptor,
    serialize,
)
from .supernet import OptFusionSupernet, SupernetConfig
