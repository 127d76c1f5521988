import numpy as np

import pytest
from scipy.special import expit

import optfusion.numeric.autodiff as ad
from optfusion.errors import ArchitectureSchemaError, ContractError
from optfusion.model import (
    ArchitectureDescriptor,
    ComponentGraph,
    FieldSchema,
    FusionOpKind,
    OptFusionSupernet,
    SupernetConfig,
    discretize,
    preset,
)
from optfusion.model.supernet import build_supernet
from optfusion.utils.precision import get_real_t, get_test_tol


SCHEMA = FieldSchema((5, 6, 7), emb_dim=2)
D = SCHEMA.hidden_dim


def _rows(num_rows=100, seed=0):
    rng = np.random.default_rng(seed)
    return np.stack(
        [rng.integers(0, size, num_rows) for size in SCHEMA.vocab_sizes], axis=1
    )


def _fixed(descriptor, seed=0, mode="fixed", real_t=np.float64):
    config = SupernetConfig(
        n=descriptor.n, emb_dim=2, with_s0=descriptor.with_s0, mode=mode
    )
    return OptFusionSupernet(config, SCHEMA, descriptor, seed=seed, real_t=real_t)


def _weights(supernet, name):
    params = supernet.components[supernet.graph[name].id]
    return {key: tensor.data for key, tensor in params.weights.items()}


def _embed(supernet, x):
    tables = _weights(supernet, "E")
    return np.concatenate(
        [tables[f"table_{idx}"][x[:, idx]] for idx in range(SCHEMA.num_fields)], axis=1
    )


def _cross(supernet, name, x0, xl):
    w = _weights(supernet, name)
    return x0 * (xl @ w["w"])[:, None] + w["b"] + xl


def _deep(supernet, name, x):
    w = _weights(supernet, name)
    return np.maximum(x @ w["weight"] + w["b"], 0)


def _head(supernet, x):
    w = _weights(supernet, "H")
    return expit(x @ w["w"] + w["b"][0])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_parallel_preset_matches_hand_built_model(n):
    descriptor = preset("parallel", n=n, with_s0=False)
    supernet = _fixed(descriptor, seed=3)
    x = _rows()
    x0 = _embed(supernet, x)
    shallow, deep = x0, x0
    for idx in range(1, n + 1):
        shallow = _cross(supernet, f"S{idx}", x0, shallow)
        deep = _deep(supernet, f"D{idx}", deep)
    graph = supernet.graph
    head_fusion = supernet.fusion_params[graph.output.id]
    concat_weight = head_fusion.weights["concat_weight"].data
    slots = graph.predecessors(graph.output.id)
    s_slot, d_slot = slots.index(graph[f"S{n}"].id), slots.index(graph[f"D{n}"].id)
    fused = (
        shallow @ concat_weight[s_slot * D : (s_slot + 1) * D]
        + deep @ concat_weight[d_slot * D : (d_slot + 1) * D]
    )
    np.testing.assert_allclose(
        supernet.forward(x).data, _head(supernet, fused), atol=1e-6
    )


def test_stacked_preset_matches_hand_built_model():
    descriptor = preset("stacked", n=2, with_s0=True)
    supernet = _fixed(descriptor, seed=4)
    x = _rows(seed=1)
    graph = supernet.graph
    x0 = _embed(supernet, x)
    s0 = _cross(supernet, "S0", x0, x0)
    d1_id = graph["D1"].id
    concat_weight = supernet.fusion_params[d1_id].weights["concat_weight"].data
    # D1 sees slots (E, S0)
    d1_input = x0 @ concat_weight[:D] + s0 @ concat_weight[D : 2 * D]
    d2 = _deep(supernet, "D2", _deep(supernet, "D1", d1_input))
    np.testing.assert_allclose(supernet.forward(x).data, _head(supernet, d2), atol=1e-6)


def test_embedding_to_output_only_is_logistic_regression():
    graph = ComponentGraph(2, with_s0=False)
    connections = np.zeros((graph.num_components,) * 2, dtype=bool)
    connections[graph.embedding.id, graph.output.id] = True
    descriptor = ArchitectureDescriptor(2, False, connections, [FusionOpKind.ADD] * 5)
    supernet = _fixed(descriptor)
    x = _rows()
    np.testing.assert_allclose(
        supernet.forward(x).data, _head(supernet, _embed(supernet, x)), atol=1e-12
    )


def test_masked_alpha_entries_do_not_affect_forward():
    config = SupernetConfig(n=2, emb_dim=2, with_s0=True)
    supernet = OptFusionSupernet(config, SCHEMA, seed=1)
    x = _rows(20)
    reference = supernet.forward(x).data.copy()
    mask = supernet.graph.level_mask()
    supernet.connections.alpha.data[~mask] = 123.0
    np.testing.assert_array_equal(supernet.forward(x).data, reference)
    # crossing zero on a valid edge does change the output
    supernet.connections.alpha.data[0, supernet.graph["D1"].id] = -0.5
    assert not np.array_equal(supernet.forward(x).data, reference)


@pytest.mark.parametrize("precision", ["single", "double"])
def test_search_forward_probabilities_and_gradients(precision):
    real_t = get_real_t(precision)
    config = SupernetConfig(n=1, emb_dim=2, with_s0=True)
    supernet = OptFusionSupernet(config, SCHEMA, seed=2, real_t=real_t)
    x = _rows(16)
    with ad.Tape() as tape:
        probabilities = supernet.forward(x)
        loss = ad.mean(probabilities)
    assert probabilities.shape == (16,)
    assert probabilities.dtype == real_t
    assert np.all((probabilities.data > 0) & (probabilities.data < 1))
    tape.backward(loss)
    alpha, beta = supernet.architecture_parameters()
    assert alpha.grad is not None and np.any(alpha.grad != 0)
    assert beta.grad is not None and np.any(beta.grad != 0)
    np.testing.assert_allclose(alpha.grad[~supernet.graph.level_mask()], 0.0)
    assert all(param.grad is not None for param in supernet.model_parameters())


def test_soft_and_hard_retrain_agree_with_dominant_logits():
    graph = ComponentGraph(2, with_s0=True)
    rng = np.random.default_rng(5)
    alpha = rng.standard_normal((graph.num_components,) * 2)
    beta = rng.standard_normal((4, len(graph.fusion_capable())))
    beta[rng.integers(0, 4, beta.shape[1]), np.arange(beta.shape[1])] += 25.0
    soft = discretize(alpha, beta, graph, variant="soft")
    soft_net = _fixed(soft, seed=9, mode="retrain_soft")
    hard_net = _fixed(soft, seed=9, mode="retrain_hard")
    x = _rows()
    np.testing.assert_allclose(
        soft_net.forward(x).data, hard_net.forward(x).data, atol=1e-6
    )


def test_non_search_modes_freeze_architecture():
    supernet = _fixed(preset("parallel", n=2), mode="retrain_hard")
    assert supernet.architecture_parameters() == []
    assert not supernet.connections.alpha.requires_grad
    np.testing.assert_array_equal(
        supernet.discretize().connections, preset("parallel", n=2).connections
    )


def test_construction_errors():
    with pytest.raises(ValueError, match="requires an architecture"):
        OptFusionSupernet(SupernetConfig(mode="fixed", emb_dim=2), SCHEMA)
    mismatched = SupernetConfig(n=3, emb_dim=2, mode="fixed")
    with pytest.raises(ArchitectureSchemaError, match="does not match"):
        OptFusionSupernet(mismatched, SCHEMA, preset("parallel", n=2))
    with pytest.raises(ValueError, match="emb_dim"):
        OptFusionSupernet(SupernetConfig(emb_dim=4), SCHEMA)
    with pytest.raises(ValueError, match="mode"):
        SupernetConfig(mode="warm")


def test_predict_proba_batches_and_refuses_tape():
    supernet = _fixed(preset("stacked", n=1))
    x = _rows(50)
    np.testing.assert_allclose(
        supernet.predict_proba(x, batch_size=7), supernet.forward(x).data, rtol=1e-12
    )
    with ad.Tape():
        with pytest.raises(ContractError, match="active Tape"):
            supernet.predict_proba(x)


def test_state_dict_round_trip():
    descriptor = preset("parallel", n=1)
    source = _fixed(descriptor, seed=1, real_t=np.float32)
    target = _fixed(descriptor, seed=2, real_t=np.float32)
    x = _rows(10)
    assert not np.allclose(source.forward(x).data, target.forward(x).data)
    state = source.state_dict()
    assert "E/table_0" in state and "H/fusion/concat_weight" in state
    target.load_state_dict(state)
    np.testing.assert_allclose(
        source.forward(x).data, target.forward(x).data, atol=get_test_tol("single")
    )
    state.pop("arch/alpha")
    with pytest.raises(ContractError, match="missing"):
        target.load_state_dict(state)


def test_build_supernet_with_operation_override():
    descriptor = preset("stacked", n=2)
    config = SupernetConfig(n=2, emb_dim=2, mode="fixed")
    supernet = build_supernet(config, SCHEMA, descriptor, op_override="PROD")
    assert set(supernet.descriptor.operations) == {FusionOpKind.PROD}
    with pytest.raises(ValueError, match="needs an architecture"):
        build_supernet(SupernetConfig(emb_dim=2), SCHEMA, op_override="ADD")
