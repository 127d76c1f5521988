"""Ordered component set with integer levels."""
from dataclasses import dataclass

import numpy as np

from optfusion.model.components import ComponentKind


@dataclass(frozen=True)
class Component:
    id: int
    name: str
    kind: ComponentKind
    level: int


class ComponentGraph:
    """Embedding, optional S0, shallow S1..Sn, deep D1..Dn and the output head.

    Levels: embedding 0, S0 at 1 when present, S_i and D_i at i (shifted by one
    when S0 is present), output one above the highest. Ids increase with level,
    shallow before deep within a level, so id order is a topological order of
    any level-respecting edge set.
    """

    def __init__(self, n: int, with_s0: bool = True) -> None:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        self.n = n
        self.with_s0 = with_s0
        offset = 1 if with_s0 else 0
        specs: list[tuple[str, ComponentKind, int]] = [
            ("E", ComponentKind.EMBEDDING, 0)
        ]
        if with_s0:
            specs.append(("S0", ComponentKind.CROSS, 1))
        for idx in range(1, n + 1):
            specs.append((f"S{idx}", ComponentKind.CROSS, idx + offset))
            specs.append((f"D{idx}", ComponentKind.DEEP, idx + offset))
        specs.append(("H", ComponentKind.OUTPUT, n + offset + 1))
        self.components = [
            Component(id=idx, name=name, kind=kind, level=level)
            for idx, (name, kind, level) in enumerate(specs)
        ]
        self._by_name = {component.name: component for component in self.components}
        levels = np.array([component.level for component in self.components])
        self._mask = levels[:, None] < levels[None, :]
        self._fusion_capable = [
            component
            for component in self.components
            if component.kind is not ComponentKind.EMBEDDING
        ]
        self._fusion_index = {
            component.id: idx for idx, component in enumerate(self._fusion_capable)
        }

    @property
    def num_components(self) -> int:
        return len(self.components)

    @property
    def embedding(self) -> Component:
        return self.components[0]

    @property
    def output(self) -> Component:
        return self.components[-1]

    def __getitem__(self, name: str) -> Component:
        return self._by_name[name]

    def names(self) -> list[str]:
        return [component.name for component in self.components]

    def level_mask(self) -> np.ndarray:
        """Boolean (C, C) matrix, true iff level(source) < level(target)."""
        return self._mask.copy()

    def is_valid_edge(self, source: int, target: int) -> bool:
        num = self.num_components
        if not (0 <= source < num and 0 <= target < num):
            return False
        return bool(self._mask[source, target])

    def valid_edges(self) -> list[tuple[int, int]]:
        edges = np.argwhere(self._mask).tolist()
        return [tuple(edge) for edge in edges]  # type: ignore

    def predecessors(self, component_id: int) -> list[int]:
        """Every component that may feed ``component_id``, in id order."""
        return np.flatnonzero(self._mask[:, component_id]).tolist()

    def fusion_capable(self) -> list[Component]:
        """Components that fuse inputs: all but the embedding."""
        return list(self._fusion_capable)

    def fusion_index(self, component_id: int) -> int:
        """Column of ``component_id`` in the operation parameters."""
        return self._fusion_index[component_id]
