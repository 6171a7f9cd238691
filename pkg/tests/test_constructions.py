import math

import numpy as np
import pytest

from bunn.autodiff import jacobian
from bunn.constructions import (
    SWAP, ConstructionError, selective_listening_params, oversmoothing_witness, run_witness,
    universal_linear_params,
)
from bunn.graph import build_graph, path_graph, positional_encoding, random_connected_graph
from bunn.heat import make_heat_operator
from bunn.model import bunn_layer_forward

from conftest import complete_graph


def test_swap_construction_maps_and_weight():
    bundle, weight = selective_listening_params(4, 0, 1, w11=0.5, w12=2.0)
    mats = bundle.matrices[:, 0]
    assert np.array_equal(mats[0], SWAP) and np.array_equal(mats[1], SWAP)
    assert np.array_equal(mats[2], np.eye(2)) and np.array_equal(mats[3], np.eye(2))
    assert np.array_equal(weight, [[0.5, 2.0], [0.0, 0.0]])
    with pytest.raises(ConstructionError):
        selective_listening_params(4, 1, 1)


def test_swap_construction_jacobian_blocks():
    # the blocks themselves follow the layer formula exactly
    g = complete_graph(4)
    bundle, weight = selective_listening_params(4, 0, 1, w11=0.5, w12=2.0)
    op = make_heat_operator(g, 1.0, "spectral")
    jac = jacobian(lambda x: bunn_layer_forward(g, bundle, weight, None, x, op, "identity"),
                   np.zeros((4, 2)))
    kernel = op.dense()
    mats = bundle.matrices[:, 0]
    for src in range(4):
        assert np.allclose(jac[1, :, src, :], kernel[1, src] * mats[1].T @ weight @ mats[src],
                           atol=1e-14)
    # with both ends swapped the row that W zeroes is row 0 of O_v^T W for every source
    assert np.abs(jac[1, 0, :, :]).max() < 1e-14


@pytest.mark.parametrize("layers", [1, 3, 8])
def test_witness_keeps_two_nodes_apart(layers, rng):
    g = random_connected_graph(6, rng)
    x = rng.normal(size=(6, 2))
    net = oversmoothing_witness(g, x, 2, layers)
    assert all(np.linalg.norm(layer.weight, 2) <= 1 + 1e-12 for layer in net)
    y = run_witness(g, x, net)
    gaps = [np.linalg.norm(y[a] - y[b]) for a, b in zip(*g.directed_edges())]
    assert max(gaps) > 1e-3


def test_witness_zero_mean_uses_bias():
    g = path_graph(3)
    x = np.zeros((3, 2))
    net = oversmoothing_witness(g, x, 0, 2)
    assert np.array_equal(net[0].bias, [[1.0, 0.0]])
    y = run_witness(g, x, net)
    assert np.linalg.norm(y[0] - y[1]) > 1e-3


def test_witness_validation(rng):
    g = path_graph(3)
    with pytest.raises(ConstructionError):
        oversmoothing_witness(g, np.zeros((3, 3)), 0, 1)
    with pytest.raises(ConstructionError):
        oversmoothing_witness(g, np.zeros((3, 2)), 0, 0)


def test_universal_network_reproduces_targets(rng):
    graphs = [path_graph(2), path_graph(3), complete_graph(3)]
    c = 2
    targets = [rng.normal(size=(g.n * c, g.n * c)) for g in graphs]
    net = universal_linear_params(graphs, targets, t=1.0, c=c)
    offsets = np.cumsum([0] + [g.n for g in graphs])
    for g, target, off in zip(graphs, targets, offsets):
        pe = positional_encoding(g, "one-hot", offset=int(off), total=net.k)
        for _ in range(5):
            x = rng.normal(size=(g.n, c))
            y = net.forward(g, pe, x)
            assert np.abs(y.reshape(-1) - target @ x.reshape(-1)).max() < 1e-9


def test_universal_validation(rng):
    with pytest.raises(ConstructionError):
        universal_linear_params([path_graph(2)], [np.eye(2)], t=math.inf)
    with pytest.raises(ConstructionError):
        universal_linear_params([build_graph(3, [(0, 1)])], [np.eye(3)], t=1.0)
    with pytest.raises(ConstructionError):
        universal_linear_params([path_graph(2)], [np.eye(3)], t=1.0, c=1)
    with pytest.raises(ConstructionError):
        universal_linear_params([path_graph(2)], [], t=1.0)
    same = [np.array([[1.0]]), np.array([[1.0]])]
    with pytest.raises(ConstructionError):
        universal_linear_params([path_graph(2)], [np.eye(2)], t=1.0, pes=[np.vstack(same)])
