"""Heat kernel actions on graphs and flat bundles.

Three evaluation modes are available: a truncated Taylor series of
exp(-t L), an exact spectral evaluation through the symmetric normalised
Laplacian, and the t -> infinity limit, which is the degree-weighted mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, linear_map
from .bundles import BundleAssignment, desynchronize, synchronize
from .graph import Graph, GraphError, rw_laplacian_apply, rw_laplacian_dense, sym_normalized_laplacian
from .linalg import dense_matrix_exp, sym_eig

__all__ = [
    "HeatError", "HeatOperator", "make_heat_operator", "heat_apply_taylor",
    "heat_apply_spectral", "heat_apply_limit", "bundle_heat_apply", "heat_kernel_dense",
    "TAYLOR_TIME_THRESHOLD", "DEFAULT_TAYLOR_DEGREE",
]

TAYLOR_TIME_THRESHOLD = 2.0
DEFAULT_TAYLOR_DEGREE = 8


class HeatError(ValueError):
    pass


def _check_rows(g: Graph, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.n:
        raise HeatError(f"signal shape {x.shape} does not match a graph with {g.n} nodes")
    return x


def _rw_laplacian_transpose(g: Graph, y: np.ndarray) -> np.ndarray:
    return y - g.adjacency @ (y / g.degrees[:, None])


def _taylor(step, t: float, degree: int, x: np.ndarray) -> np.ndarray:
    out = x.copy()
    term = x
    for k in range(1, degree + 1):
        term = -(t / k) * step(term)
        out += term
    return out


def heat_apply_taylor(g: Graph, t: float, K: int, x) -> np.ndarray:
    """sum_{k=0}^{K} (-t L)^k x / k! with L the random-walk Laplacian."""
    if t < 0 or K < 0:
        raise HeatError(f"Taylor heat needs t >= 0 and K >= 0, got t={t}, K={K}")
    x = _check_rows(g, x)
    return _taylor(lambda v: rw_laplacian_apply(g, v), t, K, x)


def _check_eig(g: Graph, eig) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = eig
    vals, vecs = np.asarray(vals), np.asarray(vecs)
    if vals.shape != (g.n,) or vecs.shape != (g.n, g.n):
        raise HeatError(f"eigendecomposition of size {vals.shape[0]} does not match {g.n} nodes")
    return vals, vecs


def heat_apply_spectral(g: Graph, eig, t: float, x) -> np.ndarray:
    """D^{-1/2} Phi exp(-t Lambda) Phi^T D^{1/2} x, eigenpairs of the symmetric Laplacian."""
    if t < 0:
        raise HeatError(f"negative diffusion time {t}")
    vals, vecs = _check_eig(g, eig)
    x = _check_rows(g, x)
    root = np.sqrt(g.degrees)[:, None]
    weights = np.exp(-t * vals)[:, None]
    return (vecs @ (weights * (vecs.T @ (root * x)))) / root


def heat_apply_limit(g: Graph, x) -> np.ndarray:
    """Every row becomes the degree-weighted mean sum_u d_u x_u / 2|E|."""
    if not g.connected:
        raise HeatError("the infinite-time heat kernel needs a connected graph")
    x = _check_rows(g, x)
    mean = g.degrees @ x / (2.0 * g.edge_count)
    return np.broadcast_to(mean, x.shape).copy()


def heat_kernel_dense(g: Graph, t: float) -> np.ndarray:
    """Dense exp(-t L) from the scaling-and-squaring exponential; rows sum to one."""
    if t < 0:
        raise HeatError(f"negative diffusion time {t}")
    if math.isinf(t):
        return np.tile(g.degrees / (2.0 * g.edge_count), (g.n, 1))
    return dense_matrix_exp(-t * rw_laplacian_dense(g))


@dataclass(frozen=True, eq=False)
class HeatOperator:
    """exp(-t L) on a fixed graph, ready to act on node signals.

    Immutable once built; the spectral mode holds the full eigenbasis of the
    symmetric normalised Laplacian, computed once.
    """

    graph: Graph
    mode: str
    t: float
    K: int = DEFAULT_TAYLOR_DEGREE
    eig: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("taylor", "spectral", "limit"):
            raise HeatError(f"unknown heat mode {self.mode!r}")
        if self.mode == "taylor" and (self.t < 0 or self.K < 0 or math.isinf(self.t)):
            raise HeatError(f"Taylor heat needs finite t >= 0 and K >= 0, got t={self.t}, K={self.K}")
        if self.mode == "spectral":
            if self.t < 0 or math.isinf(self.t):
                raise HeatError(f"spectral heat needs finite t >= 0, got {self.t}")
            if self.eig is None:
                raise HeatError("spectral heat needs an eigendecomposition")
            _check_eig(self.graph, self.eig)
        if self.mode == "limit" and not self.graph.connected:
            raise HeatError("the infinite-time heat kernel needs a connected graph")

    def apply(self, x) -> np.ndarray:
        g = self.graph
        if self.mode == "taylor":
            return heat_apply_taylor(g, self.t, self.K, x)
        if self.mode == "spectral":
            return heat_apply_spectral(g, self.eig, self.t, x)
        return heat_apply_limit(g, x)

    def apply_transpose(self, y) -> np.ndarray:
        g = self.graph
        y = _check_rows(g, y)
        if self.mode == "taylor":
            return _taylor(lambda v: _rw_laplacian_transpose(g, v), self.t, self.K, y)
        if self.mode == "spectral":
            vals, vecs = self.eig
            root = np.sqrt(g.degrees)[:, None]
            weights = np.exp(-self.t * vals)[:, None]
            return root * (vecs @ (weights * (vecs.T @ (y / root))))
        column_sums = y.sum(axis=0, keepdims=True)
        return g.degrees[:, None] * column_sums / (2.0 * g.edge_count)

    def __call__(self, x) -> Tensor:
        return linear_map(self.apply, self.apply_transpose, as_tensor(x))

    def dense(self) -> np.ndarray:
        """The kernel as an n x n matrix (column u is the response to node u)."""
        return self.apply(np.eye(self.graph.n))


def make_heat_operator(g: Graph, t: float, mode: str = "auto",
                       K: int = DEFAULT_TAYLOR_DEGREE, eig=None) -> HeatOperator:
    """Pick a heat evaluation: Taylor for t <= 2, spectral above, limit at t = inf."""
    if t < 0:
        raise HeatError(f"negative diffusion time {t}")
    if mode == "auto":
        if math.isinf(t):
            mode = "limit"
        elif t <= TAYLOR_TIME_THRESHOLD:
            mode = "taylor"
        else:
            mode = "spectral"
    if mode == "spectral" and eig is None:
        if g.degrees.min() <= 0:
            raise GraphError("spectral heat needs every node to have an edge")
        eig = sym_eig(sym_normalized_laplacian(g))
    return HeatOperator(g, mode, float(t), K, eig)


def bundle_heat_apply(g: Graph, bundle: BundleAssignment, op: HeatOperator, x) -> Tensor:
    """(H_B x)_v = sum_u H(t, v, u) O_v^T O_u x_u, for every bundle and channel."""
    if op.graph is not g and op.graph != g:
        raise HeatError("heat operator was built for a different graph")
    return desynchronize(bundle, op(synchronize(bundle, x)))
