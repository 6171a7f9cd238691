"""Undirected graphs, random-walk Laplacians, generators and positional encodings."""
from __future__ import annotations

import functools
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .linalg import sym_eig

__all__ = [
    "Graph", "GraphError", "PositionalEncoding", "NeighborsMatchSample",
    "build_graph", "rw_laplacian_apply", "rw_laplacian_dense", "sym_normalized_laplacian",
    "barbell_graph", "clique_graph", "path_graph", "cycle_graph", "binary_tree",
    "neighborsmatch_tree", "random_connected_graph", "positional_encoding",
    "read_edge_list", "write_edge_list",
]


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable simple undirected graph in CSR form.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted lexicographically; ``indptr``/``indices`` give sorted neighbour
    lists.
    """

    n: int
    edges: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray
    _adj: sp.csr_matrix = field(repr=False)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def adjacency(self) -> sp.csr_matrix:
        return self._adj

    def dense_adjacency(self) -> np.ndarray:
        return self._adj.toarray()

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) arrays listing both orientations of every edge."""
        dst = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return self.indices.copy(), dst

    @functools.cached_property
    def connected(self) -> bool:
        return self.is_connected()

    def is_connected(self) -> bool:
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for u in self.neighbors(v):
                if not seen[u]:
                    seen[u] = True
                    stack.append(int(u))
        return bool(seen.all())

    def relabel(self, perm) -> "Graph":
        """Graph with node ``v`` renamed to ``perm[v]``."""
        perm = np.asarray(perm)
        return build_graph(self.n, [(int(perm[u]), int(perm[v])) for u, v in self.edges])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Graph) and self.n == other.n
                and np.array_equal(self.edges, other.edges))

    def __hash__(self) -> int:
        return hash((self.n, self.edges.tobytes()))


def build_graph(n: int, edge_list: Iterable[tuple[int, int]]) -> Graph:
    """Build a simple graph; duplicate pairs collapse, self-loops are rejected."""
    if n <= 0:
        raise GraphError("graph needs at least one node")
    pairs = np.asarray(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if pairs.size:
        if pairs.min() < 0 or pairs.max() >= n:
            raise GraphError(f"node index out of range [0, {n})")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise GraphError("self-loops are not allowed")
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0) if pairs.size else np.zeros((0, 2), np.int64)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    adj.sort_indices()
    degrees = np.diff(adj.indptr).astype(np.int64)
    return Graph(n, edges, adj.indptr.copy(), adj.indices.copy(), degrees, adj)


def _require_positive_degrees(g: Graph) -> None:
    if np.any(g.degrees == 0):
        raise GraphError("isolated node: random-walk Laplacian undefined")


def rw_laplacian_apply(g: Graph, x: np.ndarray) -> np.ndarray:
    """(I - D^-1 A) x, computed sparsely."""
    _require_positive_degrees(g)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != g.n:
        raise GraphError(f"signal has {x.shape[0]} rows, graph has {g.n} nodes")
    agg = g.adjacency @ x
    scale = 1.0 / g.degrees
    return x - (agg * scale[:, None] if x.ndim == 2 else agg * scale)


def rw_laplacian_dense(g: Graph) -> np.ndarray:
    _require_positive_degrees(g)
    return np.eye(g.n) - g.dense_adjacency() / g.degrees[:, None]


def sym_normalized_laplacian(g: Graph) -> np.ndarray:
    """I - D^-1/2 A D^-1/2 as a dense symmetric matrix."""
    _require_positive_degrees(g)
    s = 1.0 / np.sqrt(g.degrees)
    return np.eye(g.n) - s[:, None] * g.dense_adjacency() * s[None, :]


# ---------------------------------------------------------------- generators

def path_graph(n: int) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def _clique_edges(nodes) -> list[tuple[int, int]]:
    nodes = list(nodes)
    return [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:]]


def barbell_graph(N: int) -> tuple[Graph, np.ndarray]:
    """Two cliques of N/2 nodes joined by the edge (N/2 - 1, N/2).

    Returns the graph and node types (0 for the first clique, 1 for the second).
    """
    if N < 4 or N % 2:
        raise GraphError("barbell needs an even N >= 4")
    h = N // 2
    edges = _clique_edges(range(h)) + _clique_edges(range(h, N)) + [(h - 1, h)]
    types = np.repeat([0, 1], h)
    return build_graph(N, edges), types


def clique_graph(N: int) -> tuple[Graph, np.ndarray]:
    """Complete graph K_N; the first half of the nodes has type 0."""
    if N < 2 or N % 2:
        raise GraphError("clique needs an even N >= 2")
    types = np.repeat([0, 1], N // 2)
    return build_graph(N, _clique_edges(range(N))), types


def binary_tree(depth: int) -> Graph:
    """Complete binary tree with root 0 and children 2i+1, 2i+2."""
    n = 2 ** (depth + 1) - 1
    return build_graph(n, [((v - 1) // 2, v) for v in range(1, n)])


@dataclass(frozen=True)
class NeighborsMatchSample:
    """One Tree-NeighborsMatch instance on a fixed binary tree.

    Leaves carry a key (their neighbour count in the original task) and a
    class label; the root carries a query key and must output the label of
    the unique leaf holding that key.
    """

    depth: int
    leaves: np.ndarray
    keys: np.ndarray
    labels: np.ndarray
    root_key: int
    target: int

    @property
    def num_classes(self) -> int:
        return 2 ** self.depth


def neighborsmatch_tree(depth: int, seed: int | np.random.Generator = 0
                        ) -> tuple[Graph, NeighborsMatchSample]:
    """Binary tree of the given depth and one seeded NeighborsMatch labelling.

    Leaf keys are a random permutation of 1..2^depth, labels are drawn
    uniformly from 0..2^depth - 1.
    """
    if depth < 2:
        raise GraphError("NeighborsMatch tree needs depth >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = binary_tree(depth)
    num_leaves = 2 ** depth
    leaves = np.arange(g.n - num_leaves, g.n)
    keys = rng.permutation(num_leaves) + 1
    labels = rng.integers(0, num_leaves, size=num_leaves)
    pick = int(rng.integers(0, num_leaves))
    sample = NeighborsMatchSample(depth, leaves, keys, labels, int(keys[pick]), int(labels[pick]))
    return g, sample


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3
                           ) -> Graph:
    """Random spanning tree plus independent extra edges; always connected."""
    if n == 1:
        raise GraphError("a connected graph with edges needs n >= 2")
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[rng.integers(0, i)])) for i in range(1, n)]
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < extra_edge_prob:
                edges.append((a, b))
    return build_graph(n, edges)


# ------------------------------------------------------- positional encodings

@dataclass(frozen=True)
class PositionalEncoding:
    values: np.ndarray
    kind: str

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def _canonical_sign(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        nz = np.flatnonzero(np.abs(out[:, j]) > tol)
        if nz.size and out[nz[0], j] < 0:
            out[:, j] = -out[:, j]
    return out


def _laplacian_pe(g: Graph, k: int, tie_tol: float = 1e-9) -> np.ndarray:
    vals, vecs = sym_eig(sym_normalized_laplacian(g))
    vecs = _canonical_sign(vecs)
    # stable order: ascending eigenvalue, ties resolved lexicographically
    rounded = np.round(vals / tie_tol) * tie_tol
    keys = [tuple(vecs[:, j]) for j in range(vecs.shape[1])]
    order = sorted(range(len(vals)), key=lambda j: (rounded[j], keys[j]))
    return vecs[:, order[1:k + 1]]


def _rwse(g: Graph, k: int) -> np.ndarray:
    _require_positive_degrees(g)
    walk = g.dense_adjacency() / g.degrees[:, None]
    power = np.eye(g.n)
    cols = []
    for _ in range(k):
        power = power @ walk
        cols.append(np.diag(power).copy())
    return np.stack(cols, axis=1)


def positional_encoding(g: Graph, kind: str, k: int | None = None, offset: int = 0,
                        total: int | None = None) -> PositionalEncoding:
    """Node positional encodings.

    ``one-hot``: row v is the indicator of index ``offset + v`` in a vector of
    length ``total`` (default ``offset + n``), so a graph family can share one
    injective code book. ``laplacian-eigenvector``: the first ``k``
    non-trivial eigenvectors of the symmetric normalised Laplacian, sign
    canonicalised. ``random-walk-structural``: return probabilities of the
    random walk after 1..k steps.
    """
    if kind == "one-hot":
        width = offset + g.n if total is None else total
        if offset < 0 or offset + g.n > width:
            raise GraphError("one-hot offset range does not fit the code book")
        vals = np.zeros((g.n, width))
        vals[np.arange(g.n), offset + np.arange(g.n)] = 1.0
        return PositionalEncoding(vals, kind)
    if k is None or k < 1:
        raise GraphError(f"{kind} encoding needs a width k >= 1")
    if kind == "laplacian-eigenvector":
        if k >= g.n:
            raise GraphError("laplacian encoding needs k < n")
        return PositionalEncoding(_laplacian_pe(g, k), kind)
    if kind == "random-walk-structural":
        return PositionalEncoding(_rwse(g, k), kind)
    raise GraphError(f"unknown positional encoding kind {kind!r}")


# ------------------------------------------------------------------ edge lists

def write_edge_list(g: Graph, path: str | Path | io.TextIOBase) -> None:
    """Write the ``n m`` header followed by one ``u v`` line per edge."""
    lines = [f"{g.n} {g.edge_count}"] + [f"{u} {v}" for u, v in g.edges]
    text = "\n".join(lines) + "\n"
    if isinstance(path, (str, Path)):
        Path(path).write_text(text)
    else:
        path.write(text)


def read_edge_list(path: str | Path) -> Graph:
    tokens = Path(path).read_text().split()
    try:
        n, m = int(tokens[0]), int(tokens[1])
        nums = [int(t) for t in tokens[2:]]
    except (IndexError, ValueError) as exc:
        raise GraphError(f"malformed edge list {path}: {exc}") from None
    if len(nums) != 2 * m:
        raise GraphError(f"edge list {path} declares {m} edges but has {len(nums) / 2:g}")
    return build_graph(n, zip(nums[0::2], nums[1::2]))
