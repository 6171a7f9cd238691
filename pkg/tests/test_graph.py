import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bunn.graph import (
    GraphError, barbell_graph, binary_tree, build_graph, clique_graph, cycle_graph,
    neighborsmatch_tree, path_graph, positional_encoding, random_connected_graph,
    read_edge_list, rw_laplacian_apply, rw_laplacian_dense, sym_normalized_laplacian,
    write_edge_list,
)


def test_build_graph_collapses_duplicates_and_orients_edges():
    g = build_graph(3, [(1, 0), (0, 1), (2, 1)])
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.degrees.tolist() == [1, 2, 1]
    assert g.neighbors(1).tolist() == [0, 2]


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 3)], [(-1, 1)]])
def test_build_graph_rejects_bad_edges(edges):
    with pytest.raises(GraphError):
        build_graph(3, edges)


def test_path2_laplacian():
    assert np.array_equal(rw_laplacian_dense(path_graph(2)), [[1.0, -1.0], [-1.0, 1.0]])


def test_rw_laplacian_sparse_matches_dense(rng):
    g = random_connected_graph(9, rng)
    x = rng.normal(size=(9, 3))
    assert np.allclose(rw_laplacian_apply(g, x), rw_laplacian_dense(g) @ x, atol=1e-14)


def test_isolated_node_rejected():
    g = build_graph(3, [(0, 1)])
    with pytest.raises(GraphError):
        rw_laplacian_dense(g)
    assert not g.is_connected()


def test_k3_normalised_spectrum():
    g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
    assert np.allclose(np.linalg.eigvalsh(sym_normalized_laplacian(g)), [0, 1.5, 1.5], atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2 ** 31 - 1))
def test_rw_laplacian_kills_constants_and_is_similar_to_symmetric(n, seed):
    r = np.random.default_rng(seed)
    g = random_connected_graph(n, r)
    assert g.is_connected()
    lap = rw_laplacian_dense(g)
    assert np.allclose(lap @ np.ones(n), 0.0, atol=1e-14)
    root = np.sqrt(g.degrees)
    assert np.allclose(root[:, None] * lap / root[None, :], sym_normalized_laplacian(g), atol=1e-14)


def test_barbell_structure():
    g, types = barbell_graph(10)
    assert g.n == 10 and g.edge_count == 21
    assert types.tolist() == [0] * 5 + [1] * 5
    assert g.degrees.tolist() == [4, 4, 4, 4, 5, 5, 4, 4, 4, 4]
    with pytest.raises(GraphError):
        barbell_graph(7)


def test_clique_and_tree_and_cycle():
    g, types = clique_graph(10)
    assert g.edge_count == 45 and types.sum() == 5
    tree = binary_tree(3)
    assert tree.n == 15 and tree.edge_count == 14 and tree.is_connected()
    assert cycle_graph(5).degrees.tolist() == [2] * 5


def test_neighborsmatch_instance_is_consistent():
    g, sample = neighborsmatch_tree(3, 4)
    assert g.n == 15 and sample.num_classes == 8
    assert sorted(sample.keys.tolist()) == list(range(1, 9))
    match = sample.leaves[sample.keys == sample.root_key]
    assert len(match) == 1
    assert sample.target == sample.labels[sample.keys == sample.root_key][0]
    again = neighborsmatch_tree(3, 4)[1]
    assert np.array_equal(again.keys, sample.keys) and again.target == sample.target


def test_one_hot_pe_offsets():
    pe = positional_encoding(path_graph(3), "one-hot", offset=2, total=6)
    assert pe.values.shape == (3, 6)
    assert np.array_equal(pe.values[:, 2:5], np.eye(3))
    with pytest.raises(GraphError):
        positional_encoding(path_graph(3), "one-hot", offset=4, total=6)


def test_laplacian_pe_are_eigenvectors(rng):
    g = random_connected_graph(8, rng)
    pe = positional_encoding(g, "laplacian-eigenvector", k=3).values
    lap = sym_normalized_laplacian(g)
    for j in range(3):
        v = pe[:, j]
        lam = v @ lap @ v
        assert np.allclose(lap @ v, lam * v, atol=1e-9)
        assert lam > 1e-9


def test_rwse_first_step_is_zero_and_second_is_inverse_degree_sum():
    g = cycle_graph(4)
    pe = positional_encoding(g, "random-walk-structural", k=2).values
    assert np.allclose(pe[:, 0], 0.0)
    assert np.allclose(pe[:, 1], 0.5)


def test_edge_list_round_trip(tmp_path, rng):
    g = random_connected_graph(7, rng)
    path = tmp_path / "g.txt"
    write_edge_list(g, path)
    assert read_edge_list(path) == g
    buf = io.StringIO()
    write_edge_list(path_graph(2), buf)
    assert buf.getvalue() == "2 1\n0 1\n"


def test_edge_list_parse_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("3 2\n0 1\n")
    with pytest.raises(GraphError):
        read_edge_list(bad)
    bad.write_text("x")
    with pytest.raises(GraphError):
        read_edge_list(bad)


def test_relabel_preserves_structure(rng):
    g = random_connected_graph(6, rng)
    perm = rng.permutation(6)
    h = g.relabel(perm)
    assert sorted(h.degrees.tolist()) == sorted(g.degrees.tolist())
    assert h.edge_count == g.edge_count
