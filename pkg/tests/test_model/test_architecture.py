import json
from graphlib import TopologicalSorter

import numpy as np

import pytest
from scipy.special import softmax as scipy_softmax

from optfusion.errors import ArchitectureSchemaError, InputError, LevelConstraintError
from optfusion.model import (
    ALL_OPS,
    ArchitectureDescriptor,
    ComponentGraph,
    FusionOpKind,
    descriptor_logits,
    deserialize,
    discretize,
    export_dot,
    load_descriptor,
    preset,
    save_descriptor,
    serialize,
)


def _edge_names(descriptor):
    names = descriptor.graph.names()
    return {(names[source], names[target]) for source, target in descriptor.edges()}


def test_parallel_preset_structure():
    descriptor = preset("parallel", n=3, with_s0=False)
    assert descriptor.graph.num_components == 8
    assert len(descriptor.edges()) == 8
    assert ("S3", "H") in _edge_names(descriptor)
    assert ("D3", "H") in _edge_names(descriptor)
    assert descriptor.operation_of(descriptor.graph.output.id) is FusionOpKind.CONCAT
    assert descriptor.metadata["stage"] == "preset:parallel"


def test_stacked_preset_structure():
    descriptor = preset("stacked", n=2, with_s0=True)
    assert _edge_names(descriptor) == {
        ("E", "S0"),
        ("E", "D1"),
        ("S0", "D1"),
        ("D1", "D2"),
        ("D2", "H"),
    }
    assert descriptor.operation_of(descriptor.graph["D1"].id) is FusionOpKind.CONCAT
    without_s0 = preset("stacked", n=2, with_s0=False)
    assert ("S1", "D2") in _edge_names(without_s0)
    with pytest.raises(ValueError, match="stacked preset"):
        preset("stacked", n=1, with_s0=False)
    with pytest.raises(ValueError, match="Unknown preset"):
        preset("diamond")


@pytest.mark.parametrize(
    "with_s0, expected",
    [
        (
            True,
            {("E", "S0"), ("S0", "S1"), ("E", "D2"), ("S1", "D2")}
            | {("D2", "D3"), ("D3", "H")},
        ),
        (
            False,
            {("E", "S1"), ("S1", "S2"), ("E", "D3"), ("S2", "D3"), ("D3", "H")},
        ),
    ],
)
def test_stacked_preset_chains_shallow_layers(with_s0, expected):
    descriptor = preset("stacked", n=3, with_s0=with_s0, shallow_depth=2)
    assert _edge_names(descriptor) == expected
    first_deep = descriptor.graph["D2" if with_s0 else "D3"]
    assert descriptor.operation_of(first_deep.id) is FusionOpKind.CONCAT
    assert descriptor == deserialize(serialize(descriptor))
    with pytest.raises(ValueError, match="needs n >= 4"):
        preset("stacked", n=3, with_s0=with_s0, shallow_depth=4 - int(not with_s0))
    with pytest.raises(ValueError, match="shallow_depth"):
        preset("stacked", n=3, with_s0=with_s0, shallow_depth=0)
    assert preset("parallel", n=3, shallow_depth=2) == preset("parallel", n=3)



def test_preset_keeps_required_ops_in_op_set():
    descriptor = preset("parallel", n=1, op_set=[FusionOpKind.ADD])
    assert descriptor.op_set == (FusionOpKind.ADD, FusionOpKind.CONCAT)


def test_dead_and_unused_components():
    descriptor = preset("stacked", n=2, with_s0=True)
    names = descriptor.graph.names()
    assert sorted(names[idx] for idx in descriptor.dead_components()) == ["S1", "S2"]
    assert sorted(names[idx] for idx in descriptor.unused_components()) == ["S1", "S2"]


def test_level_violation_rejected():
    graph = ComponentGraph(1, with_s0=False)
    connections = np.zeros((4, 4), dtype=bool)
    connections[graph["D1"].id, graph["S1"].id] = True
    with pytest.raises(LevelConstraintError, match="D1->S1"):
        ArchitectureDescriptor(1, False, connections, [FusionOpKind.ADD] * 3)


def test_operation_validation():
    connections = np.zeros((4, 4), dtype=bool)
    with pytest.raises(ArchitectureSchemaError, match="expected 3 operations"):
        ArchitectureDescriptor(1, False, connections, [FusionOpKind.ADD] * 2)
    with pytest.raises(ArchitectureSchemaError, match="not in op_set"):
        ArchitectureDescriptor(
            1, False, connections, ["ATT"] * 3, op_set=[FusionOpKind.ADD]
        )
    bad = np.full((4, 3), 0.3)
    with pytest.raises(ArchitectureSchemaError, match="sum to"):
        ArchitectureDescriptor(1, False, connections, bad)


def test_discretize_initial_alpha_is_fully_connected():
    graph = ComponentGraph(2, with_s0=True)
    alpha = np.where(graph.level_mask(), 0.5, 0.0)
    beta = np.zeros((4, len(graph.fusion_capable())))
    descriptor = discretize(alpha, beta, graph)
    np.testing.assert_array_equal(descriptor.connections, graph.level_mask())
    assert descriptor.metadata["variant"] == "hard"


def test_discretize_ties_go_to_lowest_index():
    graph = ComponentGraph(1, with_s0=False)
    beta = np.zeros((4, 3))
    beta[:, 0] = [1.0, 1.0, 0.0, 0.0]
    beta[:, 1] = [0.0, 2.0, 2.0, 0.0]
    beta[:, 2] = [0.0, 0.0, 0.0, 5.0]
    descriptor = discretize(np.zeros((4, 4)), beta, graph)
    expected = [FusionOpKind.ADD, FusionOpKind.PROD, FusionOpKind.ATT]
    assert descriptor.operations == expected


def test_soft_discretisation_is_column_softmax():
    graph = ComponentGraph(2, with_s0=False)
    beta = np.random.default_rng(0).standard_normal((4, 5))
    descriptor = discretize(np.zeros((6, 6)), beta, graph, variant="soft")
    expected = np.exp(beta) / np.exp(beta).sum(axis=0, keepdims=True)
    np.testing.assert_allclose(descriptor.operations, expected, rtol=1e-9)


def test_hard_discretisation_is_idempotent():
    graph = ComponentGraph(2, with_s0=True)
    rng = np.random.default_rng(1)
    size = graph.num_components
    alpha = rng.standard_normal((size, size))
    beta = rng.standard_normal((4, len(graph.fusion_capable())))
    first = discretize(alpha, beta, graph)
    again = discretize(*descriptor_logits(first), graph)
    assert again == first


def test_soft_descriptor_logits_recover_probabilities():
    graph = ComponentGraph(1, with_s0=True)
    beta = np.random.default_rng(2).standard_normal((4, 4))
    soft = discretize(np.zeros((5, 5)), beta, graph, variant="soft")
    _, recovered = descriptor_logits(soft)
    np.testing.assert_allclose(
        scipy_softmax(recovered, axis=0), soft.operations, rtol=1e-9
    )


def test_hard_soft_conversion():
    hard = preset("parallel", n=2)
    soft = hard.to_soft()
    assert soft.variant == "soft"
    np.testing.assert_allclose(soft.operations.sum(axis=0), 1.0)
    assert soft.to_hard() == hard


def test_uniform_operation_override():
    descriptor = preset("stacked", n=2, op_set=[FusionOpKind.ADD, FusionOpKind.CONCAT])
    forced = descriptor.with_uniform_operation("att")
    assert set(forced.operations) == {FusionOpKind.ATT}
    assert FusionOpKind.ATT in forced.op_set
    np.testing.assert_array_equal(forced.connections, descriptor.connections)
    assert forced.metadata["op_override"] == "ATT"


@pytest.mark.parametrize("kind", ["parallel", "stacked"])
@pytest.mark.parametrize("variant", ["hard", "soft"])
def test_serialisation_round_trip(kind, variant):
    descriptor = preset(kind, n=2)
    if variant == "soft":
        descriptor = descriptor.to_soft()
    text = serialize(descriptor)
    assert text == serialize(deserialize(text))
    assert deserialize(text) == descriptor
    document = json.loads(text)
    assert document["version"] == 1
    assert document["components"][0] == {
        "id": 0,
        "kind": "embedding",
        "level": 0,
        "name": "E",
        "unused": False,
    }


def test_corrupt_edge_rejected_with_level_error():
    document = json.loads(serialize(preset("parallel", n=1)))
    document["edges"].append(["H", "S1"])
    with pytest.raises(LevelConstraintError) as error:
        deserialize(json.dumps(document))
    assert error.value.path == "edges[4]"


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda doc: doc.update(version=2), "version"),
        (lambda doc: doc.pop("n"), "n"),
        (lambda doc: doc.update(variant="fuzzy"), "variant"),
        (lambda doc: doc["components"][1].update(level=7), "components[1].level"),
        (lambda doc: doc["components"][1].update(operation="MAX"), "operation"),
        (lambda doc: doc["edges"].append(["E", "X9"]), "edges[4]"),
    ],
)
def test_schema_errors_carry_a_path(mutate, path):
    document = json.loads(serialize(preset("parallel", n=1)))
    mutate(document)
    with pytest.raises(ArchitectureSchemaError) as error:
        deserialize(json.dumps(document))
    assert path in error.value.path


@pytest.mark.parametrize("probability", [None, [0.25], {"p": 0.25}, "a quarter"])
def test_non_numeric_soft_probability_is_a_schema_error(probability):
    document = json.loads(serialize(preset("parallel", n=1).to_soft()))
    document["components"][1]["operation"]["ADD"] = probability
    with pytest.raises(ArchitectureSchemaError) as error:
        deserialize(json.dumps(document))
    assert error.value.path.endswith(".operation")



def test_invalid_json_and_missing_file(tmp_path):
    with pytest.raises(ArchitectureSchemaError, match="invalid JSON"):
        deserialize("{")
    with pytest.raises(InputError):
        load_descriptor(tmp_path / "absent.json")
    descriptor = preset("stacked", n=1)
    save_descriptor(descriptor, tmp_path / "arch.json")
    assert load_descriptor(tmp_path / "arch.json") == descriptor


def test_minimal_hand_written_document():
    document = {
        "format": "optfusion-architecture",
        "version": 1,
        "n": 1,
        "with_s0": False,
        "variant": "hard",
        "op_set": ["ADD", "PROD"],
        "components": [
            {"name": "S1", "operation": "ADD"},
            {"name": "D1", "operation": "PROD"},
            {"name": "H", "operation": "ADD"},
        ],
        "edges": [["E", "D1"], ["D1", "H"]],
    }
    descriptor = deserialize(json.dumps(document))
    assert len(descriptor.edges()) == 2
    assert descriptor.dead_components() == [descriptor.graph["S1"].id]


def test_dead_flag_must_agree_with_edges():
    document = json.loads(serialize(preset("stacked", n=2)))
    for entry in document["components"]:
        if entry["name"] == "S1":
            entry["dead"] = False
    with pytest.raises(ArchitectureSchemaError, match="dead flag"):
        deserialize(json.dumps(document))


def test_export_dot():
    descriptor = preset("stacked", n=1)
    text = export_dot(descriptor)
    node_lines = [line for line in text.splitlines() if "[label=" in line]
    edge_lines = [line for line in text.splitlines() if "->" in line]
    assert len(node_lines) == 5
    assert len(edge_lines) == len(descriptor.edges())
    assert text.startswith("digraph optfusion {")
    assert '"S1" [label="S1\\ncross\\nADD", style=dashed];' in text
    assert text == export_dot(descriptor.copy())
    soft_text = export_dot(descriptor.to_soft())
    assert "CONCAT 1.000" in soft_text


def test_all_ops_order():
    assert [op.value for op in ALL_OPS] == ["ADD", "PROD", "CONCAT", "ATT"]


@pytest.mark.parametrize("variant", ["hard", "soft"])
def test_random_discretisations_are_level_ordered_dags(variant):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        graph = ComponentGraph(int(rng.integers(1, 4)), with_s0=bool(rng.integers(2)))
        size = graph.num_components
        alpha = rng.standard_normal((size, size))
        beta = rng.standard_normal((4, len(graph.fusion_capable())))
        descriptor = discretize(alpha, beta, graph, variant=variant)
        levels = [component.level for component in graph.components]
        for source, target in descriptor.edges():
            assert levels[source] < levels[target]
        sorter = TopologicalSorter(
            {target: descriptor.incoming(target) for target in range(size)}
        )
        assert len(list(sorter.static_order())) == size
