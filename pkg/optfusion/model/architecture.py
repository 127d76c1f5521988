"""Discrete fusion architectures: descriptor, presets, discretisation and export."""
import json
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np
from scipy.special import softmax as scipy_softmax

from optfusion.errors import ArchitectureSchemaError, InputError, LevelConstraintError
from optfusion.model.components import ComponentKind
from optfusion.model.fusion import (
    ALL_OPS,
    ComponentGraph,
    FusionOpKind,
    canonical_op_set,
)

DOCUMENT_FORMAT = "optfusion-architecture"
DOCUMENT_VERSION = 1
SOFT_SUM_TOL = 1e-6

Variant = Literal["hard", "soft"]


class ArchitectureDescriptor:
    """Discretised connections plus one operation choice per fusing component.

    Attributes
    ----------
    connections: numpy.ndarray
        Boolean (C, C) matrix, ``connections[i, j]`` means component i feeds j.
    operations: list of FusionOpKind or numpy.ndarray
        Hard variant: one operation per fusion-capable component (graph order).
        Soft variant: (k, F) matrix of operation probabilities, one column per
        fusion-capable component and one row per entry of ``op_set``.
    metadata: dict
        Free-form JSON-compatible provenance (seed, dataset, stage, ...).
    """

    def __init__(
        self,
        n: int,
        with_s0: bool,
        connections: np.ndarray,
        operations: Sequence[FusionOpKind] | np.ndarray,
        op_set: Sequence[FusionOpKind] = ALL_OPS,
        metadata: dict[str, Any] | None = None,
    ) -> None:
        self.graph = ComponentGraph(n, with_s0=with_s0)
        self.op_set = canonical_op_set(op_set)
        self.connections = np.asarray(connections, dtype=bool).copy()
        if isinstance(operations, np.ndarray):
            self.variant: Variant = "soft"
            self.operations: list[FusionOpKind] | np.ndarray = np.asarray(
                operations, dtype=np.float64
            ).copy()
        else:
            self.variant = "hard"
            self.operations = [FusionOpKind.parse(op) for op in operations]
        self.metadata: dict[str, Any] = dict(metadata or {})
        self.validate()

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def with_s0(self) -> bool:
        return self.graph.with_s0

    def validate(self) -> None:
        """Check shapes, the level constraint and the operation encoding."""
        num = self.graph.num_components
        if self.connections.shape != (num, num):
            raise ArchitectureSchemaError(
                f"connections must be ({num}, {num}), got {self.connections.shape}",
                path="connections",
            )
        mask = self.graph.level_mask()
        violations = np.argwhere(self.connections & ~mask)
        if violations.size:
            source, target = violations[0]
            src, tgt = self.graph.components[source], self.graph.components[target]
            raise LevelConstraintError(
                f"edge {src.name}->{tgt.name} goes from level {src.level} "
                f"to level {tgt.level}",
                path="edges",
            )
        num_fusing = len(self.graph.fusion_capable())
        if self.variant == "hard":
            if len(self.operations) != num_fusing:
                raise ArchitectureSchemaError(
                    f"expected {num_fusing} operations, got {len(self.operations)}",
                    path="operations",
                )
            for idx, op in enumerate(self.operations):
                if op not in self.op_set:
                    raise ArchitectureSchemaError(
                        f"operation {op.value} not in op_set", path=f"operations[{idx}]"
                    )
        else:
            probs = self.operations
            assert isinstance(probs, np.ndarray)
            if probs.shape != (len(self.op_set), num_fusing):
                raise ArchitectureSchemaError(
                    f"soft operations must be ({len(self.op_set)}, {num_fusing}), "
                    f"got {probs.shape}",
                    path="operations",
                )
            if not np.all(np.isfinite(probs)) or np.any(probs < 0):
                raise ArchitectureSchemaError(
                    "probabilities must be finite and non-negative", path="operations"
                )
            sums = probs.sum(axis=0)
            bad = np.flatnonzero(np.abs(sums - 1.0) > SOFT_SUM_TOL)
            if bad.size:
                raise ArchitectureSchemaError(
                    f"probabilities sum to {sums[bad[0]]}", path=f"operations[{bad[0]}]"
                )

    def edges(self) -> list[tuple[int, int]]:
        """Edges as (source id, target id), sorted."""
        edges = np.argwhere(self.connections).tolist()
        return [tuple(edge) for edge in edges]  # type: ignore

    def incoming(self, component_id: int) -> list[int]:
        return np.flatnonzero(self.connections[:, component_id]).tolist()

    def operation_of(self, component_id: int) -> FusionOpKind:
        """Chosen operation; for soft descriptors the most probable one."""
        col = self.graph.fusion_index(component_id)
        if self.variant == "hard":
            return self.operations[col]  # type: ignore
        return self.op_set[int(np.argmax(self.operations[:, col]))]  # type: ignore

    def probabilities_of(self, component_id: int) -> np.ndarray:
        """Operation probabilities over ``op_set``; one-hot for hard descriptors."""
        col = self.graph.fusion_index(component_id)
        if self.variant == "soft":
            return self.operations[:, col].copy()  # type: ignore
        probs = np.zeros(len(self.op_set))
        probs[self.op_set.index(self.operations[col])] = 1.0  # type: ignore
        return probs

    def dead_components(self) -> list[int]:
        """Fusing components without incoming edges (they see an identity input)."""
        return [
            component.id
            for component in self.graph.fusion_capable()
            if not self.connections[:, component.id].any()
        ]

    def unused_components(self) -> list[int]:
        """Components with no path to the output."""
        reaches_output = np.zeros(self.graph.num_components, dtype=bool)
        reaches_output[self.graph.output.id] = True
        for component in reversed(self.graph.components[:-1]):
            successors = np.flatnonzero(self.connections[component.id])
            reaches_output[component.id] = bool(reaches_output[successors].any())
        return [
            component.id
            for component in self.graph.components
            if not reaches_output[component.id]
        ]

    def to_hard(self) -> "ArchitectureDescriptor":
        if self.variant == "hard":
            return self.copy()
        ops = [
            self.operation_of(component.id)
            for component in self.graph.fusion_capable()
        ]
        return ArchitectureDescriptor(
            self.n, self.with_s0, self.connections, ops, self.op_set, self.metadata
        )

    def to_soft(self) -> "ArchitectureDescriptor":
        if self.variant == "soft":
            return self.copy()
        probs = np.stack(
            [
                self.probabilities_of(component.id)
                for component in self.graph.fusion_capable()
            ],
            axis=1,
        )
        return ArchitectureDescriptor(
            self.n, self.with_s0, self.connections, probs, self.op_set, self.metadata
        )

    def with_uniform_operation(
        self, op: FusionOpKind | str
    ) -> "ArchitectureDescriptor":
        """Same connections, every component forced to ``op`` (hard)."""
        op = FusionOpKind.parse(op)
        num_fusing = len(self.graph.fusion_capable())
        metadata = dict(self.metadata, op_override=op.value)
        return ArchitectureDescriptor(
            self.n,
            self.with_s0,
            self.connections,
            [op] * num_fusing,
            canonical_op_set(set(self.op_set) | {op}),
            metadata,
        )

    def copy(self) -> "ArchitectureDescriptor":
        operations = (
            self.operations.copy()  # type: ignore
            if self.variant == "soft"
            else list(self.operations)
        )
        return ArchitectureDescriptor(
            self.n,
            self.with_s0,
            self.connections,
            operations,
            self.op_set,
            self.metadata,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArchitectureDescriptor):
            return NotImplemented
        if (
            self.n != other.n
            or self.with_s0 != other.with_s0
            or self.variant != other.variant
            or self.op_set != other.op_set
            or self.metadata != other.metadata
            or not np.array_equal(self.connections, other.connections)
        ):
            return False
        if self.variant == "soft":
            return bool(np.array_equal(self.operations, other.operations))
        return self.operations == other.operations

    def __repr__(self) -> str:
        return (
            f"ArchitectureDescriptor(n={self.n}, with_s0={self.with_s0}, "
            f"variant={self.variant}, edges={len(self.edges())})"
        )


def _connections_from_names(
    graph: ComponentGraph, edges: Sequence[tuple[str, str]]
) -> np.ndarray:
    connections = np.zeros((graph.num_components,) * 2, dtype=bool)
    for source, target in edges:
        connections[graph[source].id, graph[target].id] = True
    return connections


def preset(
    kind: Literal["parallel", "stacked"],
    n: int = 3,
    with_s0: bool = True,
    op_set: Sequence[FusionOpKind] = ALL_OPS,
    shallow_depth: int = 1,
) -> ArchitectureDescriptor:
    """Fixed baseline fusion designs.

    parallel: E feeds the cross chain S1..Sn and the deep chain D1..Dn; the
    output fuses Sn and Dn by CONCAT.

    stacked: E feeds a chain of ``shallow_depth`` cross components starting
    at the lowest one (S0, or S1 without S0). The first deep component above
    the chain takes CONCAT(E, last shallow output), the deep chain runs upward
    and feeds the output. Components off these chains are left unconnected.
    ``shallow_depth`` is ignored by parallel.
    """
    graph = ComponentGraph(n, with_s0=with_s0)
    ops = {component.name: FusionOpKind.ADD for component in graph.fusion_capable()}
    match kind:
        case "parallel":
            edges = [("E", "S1"), ("E", "D1"), (f"S{n}", "H"), (f"D{n}", "H")]
            for idx in range(1, n):
                edges += [(f"S{idx}", f"S{idx + 1}"), (f"D{idx}", f"D{idx + 1}")]
            ops["H"] = FusionOpKind.CONCAT
        case "stacked":
            if shallow_depth < 1:
                raise ValueError(f"shallow_depth must be >= 1, got {shallow_depth}")
            start = 0 if with_s0 else 1
            shallow = [f"S{idx}" for idx in range(start, start + shallow_depth)]
            first_deep = start + shallow_depth
            if first_deep > n:
                raise ValueError(
                    f"stacked preset with {shallow_depth} shallow layer(s) needs "
                    f"n >= {first_deep}"
                )
            deep = f"D{first_deep}"
            edges = [("E", shallow[0]), ("E", deep), (shallow[-1], deep)]
            edges += list(zip(shallow, shallow[1:]))
            for idx in range(first_deep, n):
                edges.append((f"D{idx}", f"D{idx + 1}"))
            edges.append((f"D{n}", "H"))
            ops[deep] = FusionOpKind.CONCAT
        case _:
            raise ValueError(f"Unknown preset {kind!r}; expected parallel or stacked")
    op_set = canonical_op_set(set(canonical_op_set(op_set)) | set(ops.values()))
    return ArchitectureDescriptor(
        n,
        with_s0,
        _connections_from_names(graph, edges),
        [ops[component.name] for component in graph.fusion_capable()],
        op_set,
        metadata={"stage": f"preset:{kind}"},
    )


def discretize(
    alpha: np.ndarray,
    beta: np.ndarray,
    graph: ComponentGraph,
    op_set: Sequence[FusionOpKind] = ALL_OPS,
    variant: Variant = "hard",
    metadata: dict[str, Any] | None = None,
) -> ArchitectureDescriptor:
    """Turn learned logits into a descriptor.

    Connections are ``alpha > 0`` inside the level mask. Hard picks the argmax
    of each beta column (ties go to the lowest operation index); soft keeps
    the column softmax.
    """
    op_set = canonical_op_set(op_set)
    connections = (np.asarray(alpha) > 0) & graph.level_mask()
    beta = np.asarray(beta, dtype=np.float64)
    match variant:
        case "hard":
            # np.argmax returns the first maximum
            operations: list[FusionOpKind] | np.ndarray = [
                op_set[idx] for idx in np.argmax(beta, axis=0)
            ]
        case "soft":
            operations = scipy_softmax(beta, axis=0)
        case _:
            raise ValueError(f"Invalid variant {variant}")
    metadata = dict(metadata or {}, variant=variant)
    return ArchitectureDescriptor(
        graph.n, graph.with_s0, connections, operations, op_set, metadata
    )


def descriptor_logits(
    descriptor: ArchitectureDescriptor, magnitude: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    """Alpha and beta that discretise back to ``descriptor``."""
    mask = descriptor.graph.level_mask()
    alpha = np.where(descriptor.connections, magnitude, -magnitude) * mask
    probs = np.stack(
        [
            descriptor.probabilities_of(component.id)
            for component in descriptor.graph.fusion_capable()
        ],
        axis=1,
    )
    with np.errstate(divide="ignore"):
        beta = np.log(probs)
    # zero probabilities stay strictly below every finite logit
    beta[np.isneginf(beta)] = -1e3
    return alpha, beta


# serialisation


def _operation_entry(descriptor: ArchitectureDescriptor, component_id: int) -> Any:
    if descriptor.variant == "hard":
        return descriptor.operation_of(component_id).value
    probs = descriptor.probabilities_of(component_id)
    return {op.value: float(p) for op, p in zip(descriptor.op_set, probs)}


def to_document(descriptor: ArchitectureDescriptor) -> dict[str, Any]:
    dead = set(descriptor.dead_components())
    unused = set(descriptor.unused_components())
    names = descriptor.graph.names()
    components = []
    for component in descriptor.graph.components:
        entry: dict[str, Any] = {
            "id": component.id,
            "name": component.name,
            "kind": component.kind.value,
            "level": component.level,
        }
        if component.kind is not ComponentKind.EMBEDDING:
            entry["operation"] = _operation_entry(descriptor, component.id)
            entry["dead"] = component.id in dead
        entry["unused"] = component.id in unused
        components.append(entry)
    return {
        "format": DOCUMENT_FORMAT,
        "version": DOCUMENT_VERSION,
        "n": descriptor.n,
        "with_s0": descriptor.with_s0,
        "variant": descriptor.variant,
        "op_set": [op.value for op in descriptor.op_set],
        "components": components,
        "edges": [
            [names[source], names[target]] for source, target in descriptor.edges()
        ],
        "metadata": descriptor.metadata,
    }


def serialize(descriptor: ArchitectureDescriptor) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(to_document(descriptor), indent=2, sort_keys=True) + "\n"


def _require(
    document: dict, key: str, expected: type | tuple[type, ...], path: str = ""
) -> Any:
    if key not in document:
        raise ArchitectureSchemaError("missing key", path=f"{path}{key}")
    value = document[key]
    if not isinstance(value, expected) or (
        expected is int and isinstance(value, bool)
    ):
        raise ArchitectureSchemaError(
            f"expected {getattr(expected, '__name__', expected)}, "
            f"got {type(value).__name__}",
            path=f"{path}{key}",
        )
    return value


def from_document(document: Any) -> ArchitectureDescriptor:
    """Validate a parsed architecture document and build the descriptor."""
    if not isinstance(document, dict):
        raise ArchitectureSchemaError("document must be a JSON object")
    if document.get("format") != DOCUMENT_FORMAT:
        raise ArchitectureSchemaError(
            f"expected format {DOCUMENT_FORMAT!r}", path="format"
        )
    version = _require(document, "version", int)
    if version != DOCUMENT_VERSION:
        raise ArchitectureSchemaError(
            f"unsupported version {version}, expected {DOCUMENT_VERSION}",
            path="version",
        )
    n = _require(document, "n", int)
    if n < 1:
        raise ArchitectureSchemaError("n must be >= 1", path="n")
    with_s0 = _require(document, "with_s0", bool)
    variant = _require(document, "variant", str)
    if variant not in ("hard", "soft"):
        raise ArchitectureSchemaError(f"unknown variant {variant!r}", path="variant")
    try:
        op_set = canonical_op_set(_require(document, "op_set", list))
    except ValueError as error:
        raise ArchitectureSchemaError(str(error), path="op_set") from None
    graph = ComponentGraph(n, with_s0=with_s0)

    entries = _require(document, "components", list)
    by_name: dict[str, dict] = {}
    for idx, entry in enumerate(entries):
        path = f"components[{idx}]."
        if not isinstance(entry, dict):
            raise ArchitectureSchemaError(
                "expected an object", path=f"components[{idx}]"
            )
        name = _require(entry, "name", str, path)
        if name not in graph.names():
            raise ArchitectureSchemaError(
                f"unknown component {name!r}", path=f"{path}name"
            )
        component = graph[name]
        for key, expected in (("id", component.id), ("level", component.level)):
            if key in entry and entry[key] != expected:
                raise ArchitectureSchemaError(
                    f"{name} has {key} {expected}, document says {entry[key]}",
                    path=f"{path}{key}",
                )
        if "kind" in entry and entry["kind"] != component.kind.value:
            raise ArchitectureSchemaError(
                f"{name} is a {component.kind.value} component", path=f"{path}kind"
            )
        by_name[name] = entry

    connections = np.zeros((graph.num_components,) * 2, dtype=bool)
    for idx, edge in enumerate(_require(document, "edges", list)):
        path = f"edges[{idx}]"
        if (
            not isinstance(edge, list)
            or len(edge) != 2
            or not all(isinstance(name, str) for name in edge)
        ):
            raise ArchitectureSchemaError("edge must be [source, target]", path=path)
        source_name, target_name = edge
        for name in edge:
            if name not in graph.names():
                raise ArchitectureSchemaError(f"unknown component {name!r}", path=path)
        source, target = graph[source_name], graph[target_name]
        if source.level >= target.level:
            raise LevelConstraintError(
                f"edge {source_name}->{target_name} goes from level {source.level} "
                f"to level {target.level}",
                path=path,
            )
        connections[source.id, target.id] = True

    hard_ops: list[FusionOpKind] = []
    soft_cols: list[np.ndarray] = []
    for component in graph.fusion_capable():
        path = f"components[{component.name}].operation"
        if component.name not in by_name or "operation" not in by_name[component.name]:
            raise ArchitectureSchemaError("missing operation", path=path)
        value = by_name[component.name]["operation"]
        try:
            if variant == "hard":
                if not isinstance(value, str):
                    raise ArchitectureSchemaError(
                        "expected an operation name", path=path
                    )
                hard_ops.append(FusionOpKind.parse(value))
            else:
                op_names = {op.value for op in op_set}
                if not isinstance(value, dict) or set(value) != op_names:
                    raise ArchitectureSchemaError(
                        "expected one probability per op_set entry", path=path
                    )
                soft_cols.append(np.array([float(value[op.value]) for op in op_set]))
        except (TypeError, ValueError) as error:
            if isinstance(error, ArchitectureSchemaError):
                raise
            raise ArchitectureSchemaError(str(error), path=path) from None

    metadata = document.get("metadata", {})
    if not isinstance(metadata, dict):
        raise ArchitectureSchemaError("expected an object", path="metadata")
    operations: list[FusionOpKind] | np.ndarray = (
        hard_ops if variant == "hard" else np.stack(soft_cols, axis=1)
    )
    descriptor = ArchitectureDescriptor(
        n, with_s0, connections, operations, op_set, metadata
    )

    dead = set(descriptor.dead_components())
    for component in graph.fusion_capable():
        flag = by_name[component.name].get("dead")
        if flag is not None and bool(flag) != (component.id in dead):
            raise ArchitectureSchemaError(
                f"dead flag of {component.name} disagrees with its edges",
                path=f"components[{component.name}].dead",
            )
    return descriptor


def deserialize(text: str) -> ArchitectureDescriptor:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise ArchitectureSchemaError(f"invalid JSON: {error}") from None
    return from_document(document)


def save_descriptor(descriptor: ArchitectureDescriptor, path: str | Path) -> None:
    Path(path).write_text(serialize(descriptor))


def load_descriptor(path: str | Path) -> ArchitectureDescriptor:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"architecture document {path} does not exist")
    return deserialize(path.read_text())


def export_dot(descriptor: ArchitectureDescriptor) -> str:
    """Graphviz digraph: one node per component, one line per edge."""
    dead = set(descriptor.dead_components())
    names = descriptor.graph.names()
    lines = [
        "digraph optfusion {",
        "  rankdir=BT;",
        "  node [shape=box];",
    ]
    for component in descriptor.graph.components:
        label = [component.name, component.kind.value]
        if component.kind is not ComponentKind.EMBEDDING:
            op = descriptor.operation_of(component.id)
            if descriptor.variant == "soft":
                probs = descriptor.probabilities_of(component.id)
                prob = probs[descriptor.op_set.index(op)]
                label.append(f"{op.value} {prob:.3f}")
            else:
                label.append(op.value)
        style = ", style=dashed" if component.id in dead else ""
        text = "\\n".join(label)
        lines.append(f'  "{component.name}" [label="{text}"{style}];')
    for source, target in descriptor.edges():
        lines.append(f'  "{names[source]}" -> "{names[target]}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
