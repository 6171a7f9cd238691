"""Synthetic datasets: two-cluster averaging on barbell / clique graphs and
Tree-NeighborsMatch."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .graph import Graph, GraphError, PositionalEncoding, barbell_graph, clique_graph, \
    neighborsmatch_tree, positional_encoding
from .seeding import STREAM_DATA, make_rng

__all__ = [
    "CLUSTER_MEAN", "DEFAULT_HALF_WIDTH", "SyntheticTask", "Sample", "TaskError",
    "gen_averaging_dataset", "gen_neighborsmatch_dataset", "averaging_targets",
    "constant_zero_prediction", "opposite_mean_prediction", "neighborsmatch_features",
]

CLUSTER_MEAN = math.sqrt(3.0) / 2.0
# uniform half-width that keeps the two clusters disjoint and puts the
# MSE of predicting the cluster mean ~31x below predicting zero
DEFAULT_HALF_WIDTH = math.sqrt(3.0 / 8.0)


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticTask:
    kind: str
    size: int
    train: int = 100
    test: int = 100
    seed: int = 0
    half_width: float = DEFAULT_HALF_WIDTH
    feature_dim: int = 1

    def __post_init__(self):
        if self.kind not in ("barbell", "clique", "neighborsmatch"):
            raise TaskError(f"unknown task kind {self.kind!r}")
        if self.train < 1 or self.test < 0:
            raise TaskError("need at least one training sample")
        if self.half_width < 0 or self.feature_dim < 1:
            raise TaskError("half_width must be >= 0 and feature_dim >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Sample:
    graph: Graph
    pe: PositionalEncoding
    x: np.ndarray
    target: np.ndarray
    types: np.ndarray | None = None


def averaging_targets(x: np.ndarray, types: np.ndarray) -> np.ndarray:
    """Each node's target is the mean input over nodes of the other type."""
    means = np.stack([x[types == k].mean(axis=0) for k in (0, 1)])
    return means[1 - types]


def gen_averaging_dataset(task: SyntheticTask) -> list[Sample]:
    """``task.train + task.test`` samples; the first ``task.train`` are for training.

    Type-0 inputs are uniform on [m - w, m + w] with m = +sqrt(3)/2, type-1
    inputs use m = -sqrt(3)/2. One-hot node indicators serve as positional
    encodings.
    """
    if task.kind == "barbell":
        if task.size < 4 or task.size % 2:
            raise TaskError("barbell needs an even N >= 4")
        g, types = barbell_graph(task.size)
    elif task.kind == "clique":
        if task.size < 2 or task.size % 2:
            raise TaskError("clique needs an even N >= 2")
        g, types = clique_graph(task.size)
    else:
        raise TaskError(f"{task.kind!r} is not an averaging task")
    rng = make_rng(task.seed, STREAM_DATA)
    pe = positional_encoding(g, "one-hot")
    centre = np.where(types == 0, CLUSTER_MEAN, -CLUSTER_MEAN)[:, None]
    samples = []
    for _ in range(task.train + task.test):
        noise = rng.uniform(-task.half_width, task.half_width, size=(g.n, task.feature_dim))
        x = centre + noise
        samples.append(Sample(g, pe, x, averaging_targets(x, types), types))
    return samples


def constant_zero_prediction(sample: Sample) -> np.ndarray:
    return np.zeros_like(sample.target)


def opposite_mean_prediction(sample: Sample) -> np.ndarray:
    """Expected mean over the opposite cluster: -m for type 0, +m for type 1."""
    mean = np.where(sample.types == 0, -CLUSTER_MEAN, CLUSTER_MEAN)[:, None]
    return np.broadcast_to(mean, sample.target.shape).copy()


def neighborsmatch_features(g: Graph, sample) -> np.ndarray:
    """[one-hot key (0 = none) | one-hot label | root flag] per node."""
    leaves = 2 ** sample.depth
    x = np.zeros((g.n, (leaves + 1) + leaves + 1))
    x[0, sample.root_key] = 1.0
    x[0, -1] = 1.0
    x[sample.leaves, sample.keys] = 1.0
    x[sample.leaves, leaves + 1 + sample.labels] = 1.0
    internal = np.setdiff1d(np.arange(1, g.n), sample.leaves)
    x[internal, 0] = 1.0
    return x


def gen_neighborsmatch_dataset(depth: int, count: int, seed: int) -> list[Sample]:
    """Seeded Tree-NeighborsMatch samples on one binary tree; the target is a
    (1, 1) array holding the class of the leaf whose key matches the root."""
    if depth < 2:
        raise TaskError("NeighborsMatch depth must be >= 2")
    rng = make_rng(seed, STREAM_DATA)
    out = []
    g0 = None
    pe = None
    for _ in range(count):
        g, sample = neighborsmatch_tree(depth, rng)
        if g0 is None:
            g0 = g
            pe = positional_encoding(g, "one-hot")
        elif g != g0:
            raise GraphError("NeighborsMatch trees must share one topology")
        out.append(Sample(g0, pe, neighborsmatch_features(g0, sample),
                          np.array([[sample.target]], dtype=np.float64)))
    return out
