"""Message-passing baselines: MLP, GCN, GraphSAGE and single-head GAT."""
from __future__ import annotations

import functools
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (
    Tensor, add, affine, as_tensor, leaky_relu, linear_map, masked_softmax, matmul, reduce_sum, relu,
    row_gather, scalar_mul, scale_rows, segment_softmax, segment_sum, transpose,
)
from .graph import Graph
from .params import Parameters, glorot_uniform

__all__ = [
    "BaselineConfig", "gcn_layer", "sage_layer", "gat_layer", "gat_attention",
    "init_baseline_params", "baseline_forward", "BASELINE_KINDS",
]

BASELINE_KINDS = ("mlp", "gcn", "sage", "gat")


@dataclass
class BaselineConfig:
    """``layers`` message-passing (or dense) layers of width ``hidden`` and a
    linear readout. ``self_loops`` makes GCN average over the closed
    neighbourhood."""

    kind: str
    in_dim: int
    out_dim: int
    hidden: int = 128
    layers: int = 1
    self_loops: bool = True
    readout: str = "node"

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.layers < 1:
            raise ValueError("baselines need at least one layer")
        if self.readout not in ("node", "root", "mean"):
            raise ValueError(f"unknown readout {self.readout!r}")

    def to_dict(self) -> dict:
        return asdict(self)


DENSE_LIMIT = 256


@functools.lru_cache(maxsize=64)
def _mean_operator(g: Graph, self_loops: bool):
    """(apply, apply_transpose) for neighbourhood averaging; dense for small graphs."""
    adj = g.adjacency
    if self_loops:
        deg = (g.degrees + 1.0)[:, None]
    else:
        if np.any(g.degrees == 0):
            raise ValueError("mean aggregation over an empty neighbourhood")
        deg = g.degrees[:, None].astype(np.float64)
    if g.n <= DENSE_LIMIT:
        mat = g.dense_adjacency()
        if self_loops:
            mat += np.eye(g.n)
        mat /= deg
        mat_t = np.ascontiguousarray(mat.T)
        return (lambda v: mat @ v, lambda v: mat_t @ v)
    if self_loops:
        return (lambda v: (adj @ v + v) / deg,
                lambda v: adj @ (v / deg) + v / deg)
    return (lambda v: adj @ v / deg, lambda v: adj @ (v / deg))


def gcn_layer(weight, bias, g: Graph, x, self_loops: bool = True, activation=relu) -> Tensor:
    """act(A_hat x W + b) with A_hat the neighbourhood mean."""
    x = as_tensor(x)
    if x.shape[0] != g.n or x.shape[1] != as_tensor(weight).shape[0]:
        raise ValueError(f"gcn_layer: signal {x.shape} incompatible with weight / graph")
    fwd, bwd = _mean_operator(g, self_loops)
    h = affine(linear_map(fwd, bwd, x), weight, bias)
    return activation(h) if activation else h


def sage_layer(w_self, w_neigh, bias, g: Graph, x, activation=relu) -> Tensor:
    """act(x W_s + mean_{u in N(v)} x_u W_n + b)."""
    x = as_tensor(x)
    if x.shape[0] != g.n or x.shape[1] != as_tensor(w_self).shape[0]:
        raise ValueError(f"sage_layer: signal {x.shape} incompatible with weight / graph")
    fwd, bwd = _mean_operator(g, self_loops=False)
    h = add(affine(x, w_self, bias), matmul(linear_map(fwd, bwd, x), w_neigh))
    return activation(h) if activation else h


def _attention_edges(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    src, dst = g.directed_edges()
    loops = np.arange(g.n)
    return np.concatenate([src, loops]), np.concatenate([dst, loops])


@functools.lru_cache(maxsize=64)
def _attention_mask(g: Graph) -> np.ndarray:
    mask = g.dense_adjacency() > 0
    mask[np.diag_indices(g.n)] = True
    return mask


def gat_attention(weight, att_dst, att_src, g: Graph, x) -> Tensor:
    """Dense (n, n) attention matrix: row v holds alpha_vu over u in N(v) and v itself."""
    z = matmul(as_tensor(x), weight)
    scores = add(matmul(z, att_dst), transpose(matmul(z, att_src)))
    return masked_softmax(leaky_relu(scores, 0.2), _attention_mask(g))


def gat_layer(weight, att_dst, att_src, bias, g: Graph, x, activation=relu) -> Tensor:
    """act(sum_u alpha_vu x_u W + b), single-head additive attention with self-loops."""
    x = as_tensor(x)
    if x.shape[0] != g.n or x.shape[1] != as_tensor(weight).shape[0]:
        raise ValueError(f"gat_layer: signal {x.shape} incompatible with weight / graph")
    z = matmul(x, weight)
    if g.n <= DENSE_LIMIT:
        scores = add(matmul(z, att_dst), transpose(matmul(z, att_src)))
        alpha = masked_softmax(leaky_relu(scores, 0.2), _attention_mask(g))
        h = affine(alpha, z, bias)
    else:
        src, dst = _attention_edges(g)
        scores = add(row_gather(matmul(z, att_dst), dst), row_gather(matmul(z, att_src), src))
        alpha = segment_softmax(leaky_relu(scores, 0.2), dst, g.n)
        h = add(segment_sum(scale_rows(row_gather(z, src), alpha), dst, g.n), bias)
    return activation(h) if activation else h


def init_baseline_params(cfg: BaselineConfig, rng: np.random.Generator) -> Parameters:
    arrays = []
    width = cfg.in_dim
    for ell in range(cfg.layers):
        p = f"layer{ell}"
        if cfg.kind == "sage":
            arrays += [(f"{p}.Ws", glorot_uniform(rng, width, cfg.hidden)),
                       (f"{p}.Wn", glorot_uniform(rng, width, cfg.hidden))]
        else:
            arrays += [(f"{p}.W", glorot_uniform(rng, width, cfg.hidden))]
        if cfg.kind == "gat":
            arrays += [(f"{p}.att_dst", glorot_uniform(rng, cfg.hidden, 1)),
                       (f"{p}.att_src", glorot_uniform(rng, cfg.hidden, 1))]
        arrays += [(f"{p}.b", np.zeros((1, cfg.hidden)))]
        width = cfg.hidden
    arrays += [("readout.W", glorot_uniform(rng, width, cfg.out_dim)),
               ("readout.b", np.zeros((1, cfg.out_dim)))]
    return Parameters(arrays)


def baseline_forward(cfg: BaselineConfig, params: Parameters, g: Graph, x) -> Tensor:
    h = as_tensor(x)
    if h.shape != (g.n, cfg.in_dim):
        raise ValueError(f"features of shape {h.shape}, expected {(g.n, cfg.in_dim)}")
    for ell in range(cfg.layers):
        p = f"layer{ell}"
        if cfg.kind == "mlp":
            h = relu(affine(h, params[f"{p}.W"], params[f"{p}.b"]))
        elif cfg.kind == "gcn":
            h = gcn_layer(params[f"{p}.W"], params[f"{p}.b"], g, h, cfg.self_loops)
        elif cfg.kind == "sage":
            h = sage_layer(params[f"{p}.Ws"], params[f"{p}.Wn"], params[f"{p}.b"], g, h)
        else:
            h = gat_layer(params[f"{p}.W"], params[f"{p}.att_dst"], params[f"{p}.att_src"],
                          params[f"{p}.b"], g, h)
    out = affine(h, params["readout.W"], params["readout.b"])
    if cfg.readout == "root":
        out = row_gather(out, np.array([0]))
    elif cfg.readout == "mean":
        out = scalar_mul(reduce_sum(out, axis=0), 1.0 / g.n)
    return out
