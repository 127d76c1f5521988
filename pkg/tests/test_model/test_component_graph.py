import numpy as np

import pytest

from optfusion.model import (
    ComponentGraph,
    ComponentKind,
    count_valid_connections,
    enumerate_valid_connections,
    search_space_size,
)


def test_component_order_and_levels_with_s0():
    graph = ComponentGraph(3, with_s0=True)
    assert graph.names() == ["E", "S0", "S1", "D1", "S2", "D2", "S3", "D3", "H"]
    assert [c.level for c in graph.components] == [0, 1, 2, 2, 3, 3, 4, 4, 5]
    assert graph["S0"].kind is ComponentKind.CROSS
    assert graph.output.kind is ComponentKind.OUTPUT


def test_component_order_without_s0():
    graph = ComponentGraph(2, with_s0=False)
    assert graph.names() == ["E", "S1", "D1", "S2", "D2", "H"]
    assert graph.output.level == 3


def test_level_mask_forbids_same_level_and_downward_edges():
    graph = ComponentGraph(2, with_s0=False)
    s1, d1, s2 = graph["S1"].id, graph["D1"].id, graph["S2"].id
    assert not graph.is_valid_edge(s1, d1)
    assert not graph.is_valid_edge(s2, s1)
    assert graph.is_valid_edge(s1, s2)
    assert not graph.is_valid_edge(0, 99)
    mask = graph.level_mask()
    assert not mask.diagonal().any()
    # id order is topological
    assert not np.tril(mask).any()


def test_predecessors_in_id_order():
    graph = ComponentGraph(2, with_s0=True)
    assert graph.predecessors(graph["D1"].id) == [0, 1]
    assert graph.predecessors(graph.output.id) == list(range(graph.output.id))
    assert graph.predecessors(0) == []


def test_fusion_index_skips_embedding():
    graph = ComponentGraph(1, with_s0=False)
    assert [c.name for c in graph.fusion_capable()] == ["S1", "D1", "H"]
    assert graph.fusion_index(graph.output.id) == 2


def test_invalid_n():
    with pytest.raises(ValueError, match="n must be"):
        ComponentGraph(0)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("with_s0", [False, True])
def test_connection_count_matches_enumeration(n, with_s0):
    edges = enumerate_valid_connections(n, with_s0)
    assert len(edges) == count_valid_connections(n, with_s0)
    assert len(ComponentGraph(n, with_s0).valid_edges()) == len(edges)


def test_connection_count_closed_forms():
    assert count_valid_connections(3) == 25
    assert count_valid_connections(3, with_s0=True) == 33
    assert count_valid_connections(1) == 5


def test_search_space_size_is_exact():
    assert search_space_size(1, 4) == 2**5 * 4**3
    assert search_space_size(3, 4, with_s0=True) == 2**33 * 4**8
    assert search_space_size(10, 4) == 2**221 * 4**21
    with pytest.raises(ValueError):
        search_space_size(1, 0)
