"""Hand-set BuNN parameters realising specific behaviours.

* :func:`selective_listening_params` picks maps and a weight so one output channel at
  ``v`` is meant to ignore distractor nodes while listening to ``u``.
* :func:`oversmoothing_witness` builds a deep t = inf network whose output
  stays different at two nodes for any depth.
* :func:`universal_linear_params` assembles a single lifted BuNN layer that
  reproduces arbitrary linear feature maps on a finite family of graphs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundles import BundleAssignment
from .graph import Graph, PositionalEncoding, positional_encoding
from .heat import HeatOperator, make_heat_operator
from .model import bunn_layer_forward

__all__ = [
    "SWAP", "selective_listening_params", "WitnessLayer", "oversmoothing_witness", "run_witness",
    "UniversalLinearNetwork", "universal_linear_params", "ConstructionError",
]

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


class ConstructionError(ValueError):
    pass


def selective_listening_params(n: int, u: int, v: int, w11: float = 0.0, w12: float = 1.0
                      ) -> tuple[BundleAssignment, np.ndarray]:
    """Swap maps at ``u`` and ``v``, identity elsewhere; W = [[w11, w12], [0, 0]].

    Every other node is a distractor. The returned maps act on one 2-D bundle.
    """
    if not (0 <= u < n and 0 <= v < n) or u == v:
        raise ConstructionError("u and v must be distinct nodes of the graph")
    mats = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    mats[u] = SWAP
    mats[v] = SWAP
    weight = np.array([[w11, w12], [0.0, 0.0]])
    return BundleAssignment.from_matrices(mats), weight


@dataclass(frozen=True)
class WitnessLayer:
    bundle: BundleAssignment
    weight: np.ndarray
    bias: np.ndarray


def oversmoothing_witness(g: Graph, x: np.ndarray, u: int, layers: int) -> list[WitnessLayer]:
    """Layers of a t = inf, ReLU BuNN that keeps node ``u`` apart from the rest.

    ``u`` gets the swap map and every other node the identity. With
    h = sum_w d_w O_w x_w / 2|E|, the first layer keeps |h_0| (or |h_1|) in a
    single coordinate, which the swap at ``u`` moves to the other coordinate;
    later layers use W = I. If h = 0 a constant bias (1, 0) takes its place.
    All weights have spectral norm <= 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n, 2):
        raise ConstructionError("the witness works on 2-dimensional features")
    if layers < 1:
        raise ConstructionError("need at least one layer")
    mats = np.broadcast_to(np.eye(2), (g.n, 2, 2)).copy()
    mats[u] = SWAP
    bundle = BundleAssignment.from_matrices(mats)
    synced = np.einsum("nij,nj->ni", mats, x)
    h = g.degrees @ synced / (2.0 * g.edge_count)
    bias = np.zeros((1, 2))
    if abs(h[0]) > 0:
        first = np.diag([math.copysign(1.0, h[0]), 0.0])
    elif abs(h[1]) > 0:
        first = np.diag([0.0, math.copysign(1.0, h[1])])
    else:
        first = np.zeros((2, 2))
        bias = np.array([[1.0, 0.0]])
    out = [WitnessLayer(bundle, first, bias)]
    out += [WitnessLayer(bundle, np.eye(2), np.zeros((1, 2))) for _ in range(layers - 1)]
    return out


def run_witness(g: Graph, x: np.ndarray, layers: list[WitnessLayer]) -> np.ndarray:
    op = make_heat_operator(g, math.inf)
    h = np.asarray(x, dtype=np.float64)
    for layer in layers:
        h = bunn_layer_forward(g, layer.bundle, layer.weight, layer.bias, h, op, "relu").value
    return h


# ----------------------------------------------------------- universality

@dataclass(frozen=True)
class UniversalLinearNetwork:
    """lift -> one BuNN layer of width 2ck (single bundle) -> pool.

    Node ``u`` of the family owns block ``u`` (of size 2c) of the hidden
    space; its bundle map swaps the two halves of that block. The weight only
    has the lower-right c x c sub-block of each (u, v) block set, to
    (1 / H(t, u, v)) times the target's (u, v) block.
    """

    c: int
    k: int
    t: float
    lift: np.ndarray
    pool: np.ndarray
    weight: np.ndarray
    code_book: np.ndarray
    heat_mode: str = "spectral"

    def node_index(self, pe) -> np.ndarray:
        """Family-wide node index looked up from each positional encoding row."""
        vals = pe.values if isinstance(pe, PositionalEncoding) else np.asarray(pe, dtype=np.float64)
        dist = np.abs(vals[:, None, :] - self.code_book[None, :, :]).max(axis=2)
        idx = dist.argmin(axis=1)
        if np.any(dist[np.arange(len(idx)), idx] > 1e-9):
            raise ConstructionError("positional encoding not in the family's code book")
        return idx

    def bundle_for(self, pe) -> BundleAssignment:
        idx = self.node_index(pe)
        width = 2 * self.c * self.k
        mats = np.broadcast_to(np.eye(width), (len(idx), width, width)).copy()
        block = np.block([[np.zeros((self.c, self.c)), np.eye(self.c)],
                          [np.eye(self.c), np.zeros((self.c, self.c))]])
        for row, node in enumerate(idx):
            lo = 2 * self.c * node
            mats[row, lo:lo + 2 * self.c, lo:lo + 2 * self.c] = block
        return BundleAssignment.from_matrices(mats)

    def forward(self, g: Graph, pe, x, heat: HeatOperator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        heat = heat or make_heat_operator(g, self.t, self.heat_mode)
        lifted = x @ self.lift.T
        y = bunn_layer_forward(g, self.bundle_for(pe), self.weight, None, lifted, heat, "identity")
        return y.value @ self.pool.T


def universal_linear_params(graphs: list[Graph], targets: list[np.ndarray], t: float,
                            c: int | None = None, pes: list | None = None,
                            heat_mode: str = "spectral") -> UniversalLinearNetwork:
    """Parameters reproducing ``targets[i]`` exactly on ``graphs[i]``.

    Each target is an (n c) x (n c) matrix acting on node-major flattened
    features. Positional encodings default to one-hot codes over the whole
    family and must be injective across it. The kernel coefficients come
    from the same heat evaluation (``heat_mode``) the network later uses.
    """
    if len(graphs) != len(targets) or not graphs:
        raise ConstructionError("need one target per graph")
    if not (t > 0 and math.isfinite(t)):
        raise ConstructionError("construction needs a finite t > 0 so that H(t, u, v) > 0")
    for g in graphs:
        if not g.is_connected():
            raise ConstructionError("every graph in the family must be connected")
    if c is None:
        c = targets[0].shape[0] // graphs[0].n
    k = sum(g.n for g in graphs)
    if pes is None:
        offsets = np.cumsum([0] + [g.n for g in graphs])
        pes = [positional_encoding(g, "one-hot", offset=int(o), total=k) for g, o in zip(graphs, offsets)]
    code_book = np.concatenate([p.values if isinstance(p, PositionalEncoding) else np.asarray(p)
                                for p in pes])
    if code_book.shape[0] != k:
        raise ConstructionError("positional encodings must cover every node")
    for i in range(k):
        if np.any(np.abs(code_book[i + 1:] - code_book[i]).max(axis=1, initial=0.0) < 1e-9):
            raise ConstructionError("positional encodings are not injective across the family")

    width = 2 * c * k
    lift = np.zeros((width, c))
    pool = np.zeros((c, width))
    for node in range(k):
        lift[2 * c * node:2 * c * node + c] = np.eye(c)
        pool[:, 2 * c * node:2 * c * node + c] = np.eye(c)
    weight = np.zeros((width, width))
    start = 0
    for g, target in zip(graphs, targets):
        target = np.asarray(target, dtype=np.float64)
        if target.shape != (g.n * c, g.n * c):
            raise ConstructionError(f"target of shape {target.shape}, expected {(g.n * c,) * 2}")
        kernel = make_heat_operator(g, t, heat_mode).dense()
        for u in range(g.n):
            for v in range(g.n):
                block = target[u * c:(u + 1) * c, v * c:(v + 1) * c] / kernel[u, v]
                r = 2 * c * (start + u) + c
                col = 2 * c * (start + v) + c
                weight[r:r + c, col:col + c] = block
        start += g.n
    return UniversalLinearNetwork(c, k, t, lift, pool, weight, code_book, heat_mode)
