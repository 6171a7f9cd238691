import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bunn.bundles import BundleAssignment, bundle_laplacian_dense
from bunn.graph import build_graph, path_graph, random_connected_graph, rw_laplacian_dense
from bunn.heat import (
    HeatError, HeatOperator, bundle_heat_apply, heat_apply_limit, heat_apply_spectral,
    heat_apply_taylor, heat_kernel_dense, make_heat_operator,
)
from bunn.linalg import dense_matrix_exp

from conftest import complete_graph


def p2_kernel(t):
    e = math.exp(-2 * t)
    return 0.5 * np.array([[1 + e, 1 - e], [1 - e, 1 + e]])


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 5.0])
def test_p2_closed_form(t):
    g = path_graph(2)
    assert np.allclose(heat_kernel_dense(g, t), p2_kernel(t), atol=1e-14)
    assert np.allclose(make_heat_operator(g, t, "spectral").dense(), p2_kernel(t), atol=1e-14)


def test_t_zero_is_identity():
    g = path_graph(4)
    assert np.array_equal(heat_apply_taylor(g, 0.0, 8, np.eye(4)), np.eye(4))
    assert np.allclose(make_heat_operator(g, 0.0, "spectral").dense(), np.eye(4), atol=1e-14)


def test_first_order_taylor_is_mean_aggregation(rng):
    g = random_connected_graph(6, rng)
    x = rng.normal(size=(6, 2))
    mean = (g.dense_adjacency() / g.degrees[:, None]) @ x
    assert np.allclose(heat_apply_taylor(g, 1.0, 1, x), mean, atol=1e-14)


def test_limit_is_degree_weighted_mean():
    g = path_graph(3)
    assert np.allclose(heat_kernel_dense(g, math.inf), [[0.25, 0.5, 0.25]] * 3)
    assert np.allclose(heat_apply_limit(g, np.eye(3)), [[0.25, 0.5, 0.25]] * 3)


def test_long_time_spectral_approaches_limit():
    g = complete_graph(4)
    far = make_heat_operator(g, 200.0, "spectral").dense()
    assert np.abs(far - heat_kernel_dense(g, math.inf)).max() < 1e-12


def test_limit_needs_connected_graph():
    g = build_graph(4, [(0, 1), (2, 3)])
    with pytest.raises(HeatError):
        heat_apply_limit(g, np.ones((4, 1)))
    with pytest.raises(HeatError):
        make_heat_operator(g, math.inf)


def test_mode_selection():
    g = path_graph(3)
    assert make_heat_operator(g, 2.0).mode == "taylor"
    assert make_heat_operator(g, 2.5).mode == "spectral"
    assert make_heat_operator(g, math.inf).mode == "limit"
    with pytest.raises(HeatError):
        make_heat_operator(g, -1.0)
    with pytest.raises(HeatError):
        HeatOperator(g, "bogus", 1.0)
    with pytest.raises(HeatError):
        HeatOperator(g, "spectral", 1.0)


def test_spectral_eig_size_checked():
    g = path_graph(3)
    with pytest.raises(HeatError):
        heat_apply_spectral(g, (np.zeros(2), np.eye(2)), 1.0, np.ones((3, 1)))


def test_taylor_converges_with_degree(rng):
    g = random_connected_graph(10, rng)
    exact = dense_matrix_exp(-1.0 * rw_laplacian_dense(g))
    errors = [np.abs(heat_apply_taylor(g, 1.0, k, np.eye(10)) - exact).max() for k in (4, 8, 16, 24)]
    assert errors == sorted(errors, reverse=True)
    assert errors[-1] < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 16), st.sampled_from([0.1, 0.7, 3.0, math.inf]), st.integers(0, 2 ** 31 - 1))
def test_rows_sum_to_one_and_transpose_is_adjoint(n, t, seed):
    r = np.random.default_rng(seed)
    g = random_connected_graph(n, r)
    op = make_heat_operator(g, t)
    dense = op.dense()
    assert np.allclose(dense.sum(axis=1), 1.0, atol=1e-12)
    x, y = r.normal(size=(n, 2)), r.normal(size=(n, 2))
    assert np.isclose(np.sum(op.apply(x) * y), np.sum(x * op.apply_transpose(y)), atol=1e-10)


def test_kernel_detailed_balance(rng):
    # d_u H(u, v) is symmetric because D L is
    g = random_connected_graph(7, rng)
    h = make_heat_operator(g, 1.3, "spectral").dense()
    weighted = g.degrees[:, None] * h
    assert np.allclose(weighted, weighted.T, atol=1e-13)


@pytest.mark.parametrize("t", [0.3, 1.0, 4.0])
def test_bundle_heat_matches_block_exponential(t, rng):
    g = random_connected_graph(6, rng)
    bundle = BundleAssignment.from_angles(rng.normal(size=(6, 2)))
    x = rng.normal(size=(6, 4))
    exact = dense_matrix_exp(-t * bundle_laplacian_dense(g, bundle)) @ x.reshape(-1)
    op = make_heat_operator(g, t, "taylor", K=40) if t <= 1 else make_heat_operator(g, t, "spectral")
    fast = bundle_heat_apply(g, bundle, op, x).value.reshape(-1)
    assert np.abs(fast - exact).max() < 1e-10


def test_trivial_bundle_heat_is_channelwise_graph_heat(rng):
    g = random_connected_graph(5, rng)
    x = rng.normal(size=(5, 6))
    op = make_heat_operator(g, 0.8)
    out = bundle_heat_apply(g, BundleAssignment.trivial(5, 1, 2), op, x).value
    assert np.allclose(out, op.apply(x), atol=1e-14)


def test_operator_graph_mismatch(rng):
    op = make_heat_operator(path_graph(3), 1.0)
    with pytest.raises(HeatError):
        bundle_heat_apply(path_graph(4), BundleAssignment.trivial(4, 1, 2), op, np.ones((4, 2)))


def k4_taylor_deviation(t: float, K: int) -> float:
    """Closed-form max entry gap between degree-K Taylor and exact heat on K4.

    The random-walk Laplacian of K4 is J/4-orthogonal with eigenvalue 4/3, so
    every kernel is J/4 + (I - J/4) f(4/3) and entries differ by 3/4 |f_K - f|.
    """
    lam = 4.0 / 3.0
    partial = sum((-t * lam) ** k / math.factorial(k) for k in range(K + 1))
    return 0.75 * abs(partial - math.exp(-t * lam))


# derived from k4_taylor_deviation and frozen
K4_DEGREE8_GAP_T1 = 2.4256138058e-05


def test_k4_degree8_gap_matches_closed_form():
    assert k4_taylor_deviation(1.0, 8) == pytest.approx(K4_DEGREE8_GAP_T1, rel=1e-9)
    g = complete_graph(4)
    taylor = make_heat_operator(g, 1.0, "taylor", K=8).dense()
    spectral = make_heat_operator(g, 1.0, "spectral").dense()
    assert np.abs(taylor - spectral).max() == pytest.approx(K4_DEGREE8_GAP_T1, rel=1e-6)
