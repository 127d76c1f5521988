"""Search-space counting."""
from .component_graph import ComponentGraph


def count_valid_connections(n: int, with_s0: bool = False) -> int:
    """Number of level-respecting component pairs.

    2n^2 + 2n + 1 for the plain graph; S0 adds one source feeding all 2n + 2
    components above it (including the output) and one more target for E,
    giving 2n^2 + 4n + 3.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    count = 2 * n * n + 2 * n + 1
    if with_s0:
        count += 2 * n + 2
    return count


def search_space_size(n: int, k: int, with_s0: bool = False) -> int:
    """Number of (connection pattern, operation assignment) pairs.

    2^(valid connections) * k^(fusion-capable components), exact integer.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    num_fusion_capable = 2 * n + 1 + (1 if with_s0 else 0)
    return 2 ** count_valid_connections(n, with_s0) * k**num_fusion_capable


def enumerate_valid_connections(n: int, with_s0: bool = False) -> list[tuple[str, str]]:
    """Exhaustive list of level-respecting (source, target) name pairs."""
    graph = ComponentGraph(n, with_s0=with_s0)
    return [
        (graph.components[source].name, graph.components[target].name)
        for source in range(graph.num_components)
        for target in range(graph.num_components)
        if graph.components[source].level < graph.components[target].level
    ]
