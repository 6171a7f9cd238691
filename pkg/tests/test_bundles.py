import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bunn.autodiff import Tensor
from bunn.bundles import (
    BundleAssignment, BundleError, block_apply, bundle_dirichlet_energy, bundle_laplacian_apply,
    bundle_laplacian_dense, default_parity, desynchronize, householder_maps,
    householder_orthogonal, o2_maps, reflection_2d, rotation_2d, synchronize,
)
from bunn.graph import path_graph, random_connected_graph

from test_autodiff import grad_check


def test_rotation_and_reflection_forms():
    t = 0.3
    c, s = math.cos(t), math.sin(t)
    assert np.allclose(rotation_2d(t).value, [[c, s], [-s, c]], atol=1e-16)
    assert np.allclose(reflection_2d(t).value, [[c, s], [s, -c]], atol=1e-16)
    assert np.isclose(np.linalg.det(rotation_2d(t).value), 1.0)
    assert np.isclose(np.linalg.det(reflection_2d(t).value), -1.0)


def test_default_parity_needs_even_count():
    assert default_parity(4).tolist() == [1, 1, -1, -1]
    with pytest.raises(BundleError):
        default_parity(3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_householder_products_are_orthogonal(k, extra, seed):
    d = k + extra - 1 if k + extra - 1 >= k else k
    r = np.random.default_rng(seed)
    maps = householder_maps(r.normal(size=(6, k * d)), k, d).value.reshape(-1, d, d)
    assert np.abs(np.einsum("mji,mjk->mik", maps, maps) - np.eye(d)).max() < 1e-12
    assert np.allclose(np.linalg.det(maps), (-1.0) ** k)


def test_single_householder_reflects_its_vector():
    v = np.array([[1.0, 2.0, 2.0]])
    h = householder_orthogonal(v).value
    assert np.allclose(h @ v[0], -v[0])
    w = np.array([2.0, -1.0, 0.0])  # orthogonal to v
    assert np.allclose(h @ w, w)


def test_householder_zero_vector_rejected():
    with pytest.raises(BundleError):
        householder_maps(np.zeros((1, 4)), 2, 2)


def test_householder_gradient(rng):
    assert grad_check(lambda v: householder_maps(v, 3, 3), rng.normal(size=(4, 9))) < 1e-5


def test_o2_gradient(rng):
    assert grad_check(lambda th: o2_maps(th, [1.0, -1.0]), rng.normal(size=(3, 2))) < 1e-5


@pytest.mark.parametrize("transpose", [False, True])
def test_block_apply_gradient(transpose, rng):
    x = rng.normal(size=(3, 2 * 3 * 2))
    maps = rng.normal(size=(3 * 2, 4))
    assert grad_check(lambda a, m: block_apply(a, m, 2, 2, transpose), x, maps) < 1e-5


def test_sync_then_desync_is_identity(rng):
    bundle = BundleAssignment.from_angles(rng.normal(size=(5, 4)))
    x = rng.normal(size=(5, 4 * 2 * 3))
    assert np.allclose(desynchronize(bundle, synchronize(bundle, x)).value, x, atol=1e-14)


def test_sync_layout_is_bundle_major(rng):
    mats = rng.normal(size=(2, 2, 2, 2))
    bundle = BundleAssignment.from_matrices(mats)
    x = rng.normal(size=(2, 2 * 3 * 2))  # b=2, p=3, d=2
    y = synchronize(bundle, x).value.reshape(2, 2, 3, 2)
    xv = x.reshape(2, 2, 3, 2)
    for v in range(2):
        for i in range(2):
            for ch in range(3):
                assert np.allclose(y[v, i, ch], mats[v, i] @ xv[v, i, ch])


def test_layout_errors(rng):
    bundle = BundleAssignment.trivial(3, 2, 2)
    with pytest.raises(BundleError):
        synchronize(bundle, np.ones((3, 5)))
    with pytest.raises(BundleError):
        synchronize(bundle, np.ones((4, 4)))


def test_bundle_laplacian_dense_matches_apply(rng):
    g = random_connected_graph(6, rng)
    bundle = BundleAssignment.from_angles(rng.normal(size=(6, 2)))
    x = rng.normal(size=(6, 4))
    dense = bundle_laplacian_dense(g, bundle)
    assert np.allclose(dense @ x.reshape(-1), bundle_laplacian_apply(g, bundle, x).value.reshape(-1),
                       atol=1e-13)


def test_trivial_bundle_laplacian_is_kronecker(rng):
    g = random_connected_graph(5, rng)
    from bunn.graph import rw_laplacian_dense

    dense = bundle_laplacian_dense(g, BundleAssignment.trivial(5, 1, 3))
    assert np.allclose(dense, np.kron(rw_laplacian_dense(g), np.eye(3)))


def test_global_gauge_leaves_laplacian_unchanged(rng):
    g = random_connected_graph(5, rng)
    bundle = BundleAssignment.from_angles(rng.normal(size=(5, 2)))
    q = rotation_2d(1.1).value
    assert np.allclose(bundle_laplacian_dense(g, bundle),
                       bundle_laplacian_dense(g, bundle.with_global_gauge(q)), atol=1e-14)


def test_dirichlet_energy_zero_on_parallel_sections(rng):
    g = random_connected_graph(6, rng)
    bundle = BundleAssignment.from_angles(rng.normal(size=(6, 2)))
    # a section that is constant in the global frame has zero energy
    synced = np.tile(rng.normal(size=(1, 4)), (6, 1))
    x = desynchronize(bundle, synced).value
    assert bundle_dirichlet_energy(g, bundle, x) < 1e-25


def test_dirichlet_energy_p2_closed_form():
    g = path_graph(2)
    bundle = BundleAssignment.trivial(2, 1, 2)
    x = np.array([[1.0, 0.0], [0.0, 0.0]])
    # 1/2 * (1/d_0 + 1/d_1) * |x_0 - x_1|^2
    assert bundle_dirichlet_energy(g, bundle, x) == pytest.approx(1.0)


def test_orthogonality_error_and_detached(rng):
    bundle = BundleAssignment.from_angles(Tensor(rng.normal(size=(4, 2)), requires_grad=True))
    assert bundle.orthogonality_error() < 1e-15
    assert not bundle.detached().maps.requires_grad
