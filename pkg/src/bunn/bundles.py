"""Flat vector bundles: per-node orthogonal maps and the operators built on them.

Node signals use a bundle-major channel layout. With ``b`` bundles of
dimension ``d`` and ``p`` vector-field channels per bundle, a row has
``b * p * d`` columns and bundle ``i``, channel ``j`` occupies columns
``(i * p + j) * d`` to ``(i * p + j + 1) * d - 1``. With ``p = 1`` bundle
``i`` owns columns ``i * d .. (i + 1) * d - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, _make, as_tensor, linear_map
from .graph import Graph, rw_laplacian_apply

__all__ = [
    "BundleAssignment", "BundleError", "rotation_2d", "reflection_2d",
    "householder_orthogonal", "householder_maps", "o2_maps", "block_apply",
    "synchronize", "desynchronize", "bundle_laplacian_apply", "bundle_laplacian_dense",
    "bundle_dirichlet_energy", "default_parity",
]


class BundleError(ValueError):
    pass


# ------------------------------------------------------------- primitives

def o2_maps(theta, parity) -> Tensor:
    """Flattened 2x2 orthogonal maps from angles.

    ``theta`` is an (n, b) tensor and ``parity`` a length-b vector of +1
    (rotation ``[[c, s], [-s, c]]``) or -1 (reflection ``[[c, s], [s, -c]]``).
    Returns an (n * b, 4) tensor holding each map row-major.
    """
    theta = as_tensor(theta)
    sign = np.asarray(parity, dtype=np.float64).reshape(1, -1)
    if sign.shape[1] != theta.shape[1]:
        raise BundleError(f"parity has {sign.shape[1]} entries, angles have {theta.shape[1]} columns")
    c = np.cos(theta.value)
    s = np.sin(theta.value)
    flat = np.stack([c, s, -sign * s, sign * c], axis=-1).reshape(-1, 4)

    def back(g):
        g = g.reshape(theta.shape + (4,))
        return (-g[..., 0] * s + g[..., 1] * c - g[..., 2] * sign * c - g[..., 3] * sign * s,)

    return _make(flat, (theta,), back)


def householder_maps(vectors, k: int, d: int) -> Tensor:
    """Products of ``k`` Householder reflections per row.

    ``vectors`` is (m, k * d): row r holds v_1..v_k. Row r of the result is
    the flattened d x d matrix H_1 H_2 ... H_k with H_i = I - 2 v_i v_i^T / |v_i|^2.
    """
    vectors = as_tensor(vectors)
    m = vectors.shape[0]
    if vectors.shape[1] != k * d or k > d:
        raise BundleError(f"expected (m, k*d) vectors with k <= d, got {vectors.shape}, k={k}, d={d}")
    v = vectors.value.reshape(m, k, d)
    sq = np.einsum("mkd,mkd->mk", v, v)
    if np.any(sq <= 1e-16):
        raise BundleError("near-zero Householder vector (norm <= 1e-8)")
    eye = np.eye(d)
    refl = eye - 2.0 * np.einsum("mki,mkj->mkij", v, v) / sq[..., None, None]
    # prefix[i] = H_1..H_i, suffix[i] = H_i..H_k
    prefix = [np.broadcast_to(eye, (m, d, d))]
    for i in range(k):
        prefix.append(prefix[-1] @ refl[:, i])
    suffix = [np.broadcast_to(eye, (m, d, d))]
    for i in reversed(range(k)):
        suffix.append(refl[:, i] @ suffix[-1])
    suffix = suffix[::-1]
    out = prefix[k].reshape(m, d * d)

    def back(g):
        g = g.reshape(m, d, d)
        grad = np.empty_like(v)
        for i in range(k):
            left = prefix[i]
            right = suffix[i + 1]
            gh = np.swapaxes(left, 1, 2) @ g @ np.swapaxes(right, 1, 2)
            vi = v[:, i]
            sym_v = np.einsum("mij,mj->mi", gh + np.swapaxes(gh, 1, 2), vi)
            quad = np.einsum("mi,mij,mj->m", vi, gh, vi)
            grad[:, i] = (-2.0 * sym_v / sq[:, i, None]
                          + 4.0 * quad[:, None] * vi / sq[:, i, None] ** 2)
        return (grad.reshape(m, k * d),)

    return _make(out, (vectors,), back)


def block_apply(x, maps, b: int, d: int, transpose: bool = False) -> Tensor:
    """Apply per-node, per-bundle d x d maps to every vector-field channel.

    ``x`` is (n, b * p * d); ``maps`` is (n * b, d * d). With ``transpose``
    the maps are applied transposed (desynchronisation).
    """
    x, maps = as_tensor(x), as_tensor(maps)
    n, cols = x.shape
    if cols % (b * d):
        raise BundleError(f"signal width {cols} is not a multiple of b*d = {b * d}")
    if maps.shape != (n * b, d * d):
        raise BundleError(f"maps have shape {maps.shape}, expected {(n * b, d * d)}")
    p = cols // (b * d)
    xv = x.value.reshape(n, b, p, d)
    mv = maps.value.reshape(n, b, d, d)
    mv_t = np.swapaxes(mv, 2, 3)
    # batched matmul over (node, bundle); rows of xv are the p channel vectors
    out = xv @ (mv if transpose else mv_t)
    need_x, need_maps = x.requires_grad, maps.requires_grad

    def back(g):
        g = g.reshape(n, b, p, d)
        gx = gm = None
        if transpose:
            if need_x:
                gx = (g @ mv_t).reshape(n, cols)
            if need_maps:
                gm = (np.swapaxes(xv, 2, 3) @ g).reshape(n * b, d * d)
        else:
            if need_x:
                gx = (g @ mv).reshape(n, cols)
            if need_maps:
                gm = (np.swapaxes(g, 2, 3) @ xv).reshape(n * b, d * d)
        return gx, gm

    return _make(out.reshape(n, cols), (x, maps), back)


def rotation_2d(theta) -> Tensor:
    """r(theta) = [[cos, sin], [-sin, cos]] as a differentiable 2x2 tensor."""
    from .autodiff import reshape

    return reshape(o2_maps(reshape(as_tensor(theta), (1, 1)), [1.0]), (2, 2))


def reflection_2d(theta) -> Tensor:
    """r*(theta) = [[cos, sin], [sin, -cos]] as a differentiable 2x2 tensor."""
    from .autodiff import reshape

    return reshape(o2_maps(reshape(as_tensor(theta), (1, 1)), [-1.0]), (2, 2))


def householder_orthogonal(vectors) -> Tensor:
    """U = H_1 ... H_k for the rows of a (k, d) matrix of reflection vectors."""
    from .autodiff import reshape

    vectors = as_tensor(vectors)
    k, d = vectors.shape
    return reshape(householder_maps(reshape(vectors, (1, k * d)), k, d), (d, d))


def default_parity(b: int) -> np.ndarray:
    """First half of the bundles are rotations, the second half reflections."""
    if b % 2:
        raise BundleError("the angle parameterisation needs an even number of bundles")
    return np.concatenate([np.ones(b // 2), -np.ones(b // 2)])


# ----------------------------------------------------------------- bundles

@dataclass(frozen=True)
class BundleAssignment:
    """Orthogonal maps O_v^(i) for every node v and bundle i.

    ``maps`` is an (n * b, d * d) tensor (row ``v * b + i`` is O_v^(i)
    flattened row-major); it stays linked to whatever parameters produced it.
    """

    n: int
    b: int
    d: int
    maps: Tensor

    @classmethod
    def from_angles(cls, theta, parity=None) -> "BundleAssignment":
        theta = as_tensor(theta)
        n, b = theta.shape
        parity = default_parity(b) if parity is None else parity
        return cls(n, b, 2, o2_maps(theta, parity))

    @classmethod
    def from_householder(cls, vectors, n: int, b: int, k: int, d: int) -> "BundleAssignment":
        """``vectors`` is (n, b * k * d), bundle-major."""
        from .autodiff import reshape

        vectors = as_tensor(vectors)
        flat = reshape(vectors, (n * b, k * d))
        return cls(n, b, d, householder_maps(flat, k, d))

    @classmethod
    def from_matrices(cls, mats) -> "BundleAssignment":
        """``mats`` has shape (n, b, d, d) or (n, d, d) for a single bundle."""
        mats = np.asarray(mats, dtype=np.float64)
        if mats.ndim == 3:
            mats = mats[:, None]
        n, b, d, _ = mats.shape
        return cls(n, b, d, Tensor(mats.reshape(n * b, d * d)))

    @classmethod
    def trivial(cls, n: int, b: int = 1, d: int = 2) -> "BundleAssignment":
        return cls.from_matrices(np.broadcast_to(np.eye(d), (n, b, d, d)))

    @property
    def matrices(self) -> np.ndarray:
        return self.maps.value.reshape(self.n, self.b, self.d, self.d)

    def orthogonality_error(self) -> float:
        m = self.matrices
        gram = np.einsum("nbji,nbjk->nbik", m, m)
        return float(np.abs(gram - np.eye(self.d)).max())

    def detached(self) -> "BundleAssignment":
        return BundleAssignment(self.n, self.b, self.d, self.maps.detach())

    def with_global_gauge(self, q) -> "BundleAssignment":
        """Maps Q O_v^(i) for a fixed d x d orthogonal Q."""
        q = np.asarray(q, dtype=np.float64)
        return BundleAssignment.from_matrices(np.einsum("ij,nbjk->nbik", q, self.matrices))


def _check_layout(bundle: BundleAssignment, x: Tensor) -> None:
    if x.shape[0] != bundle.n:
        raise BundleError(f"signal has {x.shape[0]} rows, bundle has {bundle.n} nodes")
    if x.shape[1] % (bundle.b * bundle.d):
        raise BundleError(f"signal width {x.shape[1]} incompatible with b={bundle.b}, d={bundle.d}")


def synchronize(bundle: BundleAssignment, x) -> Tensor:
    """Local to global frame: row v, bundle i becomes O_v^(i) x_v^(i)."""
    x = as_tensor(x)
    _check_layout(bundle, x)
    return block_apply(x, bundle.maps, bundle.b, bundle.d)


def desynchronize(bundle: BundleAssignment, x) -> Tensor:
    """Global to local frame (inverse of :func:`synchronize`)."""
    x = as_tensor(x)
    _check_layout(bundle, x)
    return block_apply(x, bundle.maps, bundle.b, bundle.d, transpose=True)


def _rw_laplacian_transpose(g: Graph, y: np.ndarray) -> np.ndarray:
    return y - g.adjacency @ (y / g.degrees[:, None])


def bundle_laplacian_apply(g: Graph, bundle: BundleAssignment, x) -> Tensor:
    """Bundle Laplacian O^T (L (x) I) O applied to x."""
    synced = synchronize(bundle, x)
    lap = linear_map(lambda v: rw_laplacian_apply(g, v),
                     lambda v: _rw_laplacian_transpose(g, v), synced)
    return desynchronize(bundle, lap)


def bundle_laplacian_dense(g: Graph, bundle: BundleAssignment) -> np.ndarray:
    """Block bundle Laplacian assembled edge by edge, one block per node pair.

    Acts on signals flattened node-major with the bundle-major layout inside a
    node, for ``p = 1``. Block (u, v) for an edge is -(1/d_u) O_u^T O_v per
    bundle; diagonal blocks are identity.
    """
    n, b, d = bundle.n, bundle.b, bundle.d
    mats = bundle.matrices
    width = b * d
    lap = np.eye(n * width)
    for u in range(n):
        for v in g.neighbors(u):
            for i in range(b):
                block = mats[u, i].T @ mats[v, i] / g.degrees[u]
                r = u * width + i * d
                c = v * width + i * d
                lap[r:r + d, c:c + d] -= block
    return lap


def bundle_dirichlet_energy(g: Graph, bundle: BundleAssignment, x) -> float:
    """1/2 sum over ordered adjacent pairs (u, v) of |x_u - O_uv x_v|^2 / d_u."""
    synced = synchronize(bundle, x).value
    src, dst = g.directed_edges()
    diff = synced[dst] - synced[src]
    per_edge = np.sum(diff * diff, axis=1) / g.degrees[dst]
    return 0.5 * float(per_edge.sum())
