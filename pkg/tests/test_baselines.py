import numpy as np
import pytest

from bunn import baselines
from bunn.autodiff import Tensor
from bunn.baselines import (
    BaselineConfig, baseline_forward, gat_attention, gat_layer, gcn_layer, init_baseline_params,
    sage_layer,
)
from bunn.graph import build_graph, random_connected_graph

from test_autodiff import grad_check


def test_config_errors():
    with pytest.raises(ValueError):
        BaselineConfig("gin", 2, 1)
    with pytest.raises(ValueError):
        BaselineConfig("gcn", 2, 1, layers=0)
    with pytest.raises(ValueError):
        BaselineConfig("gcn", 2, 1, readout="max")


def test_gcn_is_closed_neighbourhood_mean(rng):
    g = random_connected_graph(6, rng)
    x, w = rng.normal(size=(6, 3)), rng.normal(size=(3, 2))
    a_hat = g.dense_adjacency() + np.eye(6)
    a_hat /= a_hat.sum(axis=1, keepdims=True)
    out = gcn_layer(w, np.zeros((1, 2)), g, x, activation=None).value
    assert np.allclose(out, a_hat @ x @ w, atol=1e-14)
    open_mean = gcn_layer(w, np.zeros((1, 2)), g, x, self_loops=False, activation=None).value
    assert np.allclose(open_mean, (g.dense_adjacency() / g.degrees[:, None]) @ x @ w, atol=1e-14)


def test_sage_formula(rng):
    g = random_connected_graph(5, rng)
    x = rng.normal(size=(5, 3))
    ws, wn, b = rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=(1, 2))
    mean = (g.dense_adjacency() / g.degrees[:, None]) @ x
    out = sage_layer(ws, wn, b, g, x, activation=None).value
    assert np.allclose(out, x @ ws + mean @ wn + b, atol=1e-14)


def test_sage_rejects_isolated_nodes(rng):
    g = build_graph(3, [(0, 1)])
    with pytest.raises(ValueError):
        sage_layer(np.eye(2), np.eye(2), np.zeros((1, 2)), g, np.ones((3, 2)))


def test_attention_rows_are_distributions_on_the_closed_neighbourhood(rng):
    g = random_connected_graph(8, rng)
    alpha = gat_attention(rng.normal(size=(3, 4)), rng.normal(size=(4, 1)), rng.normal(size=(4, 1)),
                          g, rng.normal(size=(8, 3))).value
    assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-14)
    outside = (g.dense_adjacency() == 0) & ~np.eye(8, dtype=bool)
    assert np.all(alpha[outside] == 0)


def test_gat_dense_and_edge_paths_agree(rng, monkeypatch):
    g = random_connected_graph(9, rng)
    args = (rng.normal(size=(3, 4)), rng.normal(size=(4, 1)), rng.normal(size=(4, 1)),
            rng.normal(size=(1, 4)), g, rng.normal(size=(9, 3)))
    dense = gat_layer(*args).value
    monkeypatch.setattr(baselines, "DENSE_LIMIT", 0)
    sparse = gat_layer(*args).value
    assert np.allclose(dense, sparse, atol=1e-13)


@pytest.mark.parametrize("dense", [True, False])
def test_gat_gradient(dense, rng, monkeypatch):
    if not dense:
        monkeypatch.setattr(baselines, "DENSE_LIMIT", 0)
    g = random_connected_graph(5, rng)
    err = grad_check(lambda w, ad, as_, b, x: gat_layer(w, ad, as_, b, g, x),
                     rng.normal(size=(3, 4)), rng.normal(size=(4, 1)), rng.normal(size=(4, 1)),
                     rng.normal(size=(1, 4)), rng.normal(size=(5, 3)))
    assert err < 1e-5


@pytest.mark.parametrize("self_loops", [True, False])
def test_gcn_gradient(self_loops, rng, monkeypatch):
    g = random_connected_graph(6, rng)
    err = grad_check(lambda w, b, x: gcn_layer(w, b, g, x, self_loops),
                     rng.normal(size=(3, 4)), rng.normal(size=(1, 4)), rng.normal(size=(6, 3)))
    assert err < 1e-5


def test_sparse_mean_operator_matches_dense(rng, monkeypatch):
    g = random_connected_graph(7, rng)
    x, w, b = rng.normal(size=(7, 3)), rng.normal(size=(3, 2)), rng.normal(size=(1, 2))
    dense = [gcn_layer(w, b, g, x, s, None).value for s in (True, False)]
    monkeypatch.setattr(baselines, "DENSE_LIMIT", 0)
    baselines._mean_operator.cache_clear()
    try:
        sparse = [gcn_layer(w, b, g, x, s, None).value for s in (True, False)]
        err = grad_check(lambda a: gcn_layer(w, b, g, a, True), x)
    finally:
        baselines._mean_operator.cache_clear()
    assert np.allclose(dense, sparse, atol=1e-14)
    assert err < 1e-5


def test_sage_gradient(rng):
    g = random_connected_graph(6, rng)
    err = grad_check(lambda ws, wn, b, x: sage_layer(ws, wn, b, g, x),
                     rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(1, 4)),
                     rng.normal(size=(6, 3)))
    assert err < 1e-5


@pytest.mark.parametrize("kind", ["mlp", "gcn", "sage", "gat"])
@pytest.mark.parametrize("readout,rows", [("node", 6), ("root", 1), ("mean", 1)])
def test_forward_shapes(kind, readout, rows, rng):
    g = random_connected_graph(6, rng)
    cfg = BaselineConfig(kind, 3, 2, hidden=8, layers=2, readout=readout)
    out = baseline_forward(cfg, init_baseline_params(cfg, rng), g, rng.normal(size=(6, 3)))
    assert out.shape == (rows, 2)


def test_mlp_ignores_the_graph(rng):
    cfg = BaselineConfig("mlp", 3, 1, hidden=8, layers=2)
    params = init_baseline_params(cfg, rng)
    x = rng.normal(size=(5, 3))
    a = baseline_forward(cfg, params, random_connected_graph(5, rng), x).value
    b = baseline_forward(cfg, params, build_graph(5, [(0, 1)]), x).value
    assert np.array_equal(a, b)


def test_feature_shape_check(rng):
    cfg = BaselineConfig("gcn", 3, 1)
    with pytest.raises(ValueError):
        baseline_forward(cfg, init_baseline_params(cfg, rng), random_connected_graph(4, rng),
                         np.ones((4, 2)))
