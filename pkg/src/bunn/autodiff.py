"""Dense 2-D tensors with tape-based reverse-mode differentiation.

Every value is a 2-D float64 array. Operations record themselves on the
active :class:`Tape` only when one of their inputs requires a gradient, so
plain evaluation (oracles, inference) runs on bare numpy with no overhead.

Usage::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = reduce_sum(matmul(x, w))
    grads = tape.backward(loss)
    grads[w]
"""
from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor", "Tape", "AutodiffError", "as_tensor", "backward", "no_grad_value",
    "matmul", "affine", "add", "sub", "scalar_mul", "hadamard", "row_gather", "take_cols",
    "concat_cols", "reduce_sum", "relu", "leaky_relu", "gelu", "tanh", "sin", "cos",
    "mse_loss", "softmax_cross_entropy", "transpose", "reshape", "divide_scalar",
    "dot", "linear_map", "segment_sum", "segment_softmax", "scale_rows", "masked_softmax",
    "jacobian", "numerical_gradient",
]


class AutodiffError(RuntimeError):
    """Raised for misuse of the tape (stale tape, non-scalar loss, shape errors)."""


_state = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tensor:
    """A 2-D array that may participate in a recording tape."""

    __slots__ = ("value", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise AutodiffError(f"tensors are 2-D, got shape {arr.shape}")
        self.value = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def numpy(self) -> np.ndarray:
        return self.value

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def item(self) -> float:
        if self.value.size != 1:
            raise AutodiffError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def no_grad_value(x) -> np.ndarray:
    """Underlying array of a tensor or array-like."""
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


class Tape:
    """Ordered record of differentiable operations.

    Creation order is a valid topological order, so backward simply walks
    the record in reverse. A tape may be differentiated once.
    """

    def __init__(self, debug: bool = False):
        self.nodes: list[Tensor] = []
        self.debug = debug
        self._used = False
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        if self._used:
            raise AutodiffError("tape already consumed; create a new one")
        self._prev = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = self._prev
        self._prev = None

    def record(self, node: Tensor) -> None:
        if self._used:
            raise AutodiffError("recording on a stale tape")
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        return backward(self, loss)

    def reset(self) -> None:
        self.nodes.clear()
        self._used = False


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-mode sweep from a scalar ``loss``.

    Returns gradients for every leaf tensor with ``requires_grad`` that the
    loss depends on; leaves also have the gradient added into ``.grad``.
    """
    if tape._used:
        raise AutodiffError("tape already consumed; gradients were taken once")
    if loss.value.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.shape}")
    tape._used = True
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    leaves: dict[Tensor, np.ndarray] = {}
    if loss._backward is None:
        if loss.requires_grad:
            leaves[loss] = grads[id(loss)]
        return _finish(leaves)
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent._backward is None:
                prev = leaves.get(parent)
                leaves[parent] = pg if prev is None else prev + pg
            else:
                prev = grads.get(key)
                grads[key] = pg if prev is None else prev + pg
    return _finish(leaves)


def _finish(leaves: dict[Tensor, np.ndarray]) -> dict[Tensor, np.ndarray]:
    for leaf, g in leaves.items():
        leaf.grad = g if leaf.grad is None else leaf.grad + g
    return leaves


def _any_requires_grad(parents: tuple) -> bool:
    for p in parents:
        if p.requires_grad:
            return True
    return False


def _make(value: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    tape = _active_tape()
    if tape is not None and _any_requires_grad(parents):
        if tape.debug and not np.all(np.isfinite(value)):
            raise AutodiffError("non-finite intermediate value")
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        tape.record(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise AutodiffError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------- primitives

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    av, bv = a.value, b.value
    need_a, need_b = a.requires_grad, b.requires_grad
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T if need_a else None,
                                             av.T @ g if need_b else None))


def affine(x, weight, bias) -> Tensor:
    """``x @ weight + bias`` as one recorded step; ``bias`` is a single row."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.shape[1] != weight.shape[0] or bias.shape != (1, weight.shape[1]):
        raise AutodiffError(f"affine: shapes {x.shape}, {weight.shape}, {bias.shape} do not align")
    xv, wv = x.value, weight.value
    need_x = x.requires_grad

    def back(g):
        return (g @ wv.T if need_x else None, xv.T @ g, g.sum(axis=0, keepdims=True))

    return _make(xv @ wv + bias.value, (x, weight, bias), back)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def scalar_mul(a, s: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.value * s, (a,), lambda g: (g * s,))


def divide_scalar(a, s) -> Tensor:
    """``a / s`` where ``s`` is a 1x1 tensor."""
    a, s = as_tensor(a), as_tensor(s)
    if s.value.size != 1:
        raise AutodiffError("divide_scalar: divisor must be 1x1")
    av, sv = a.value, s.value[0, 0]
    out = av / sv
    return _make(out, (a, s),
                 lambda g: (g / sv, np.array([[-(g * av).sum() / sv ** 2]])))


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "hadamard")
    av, bv = a.value, b.value
    sa, sb = a.shape, b.shape
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)))


def scale_rows(x, s) -> Tensor:
    """Multiply row ``i`` of ``x`` by ``s[i, 0]``."""
    x, s = as_tensor(x), as_tensor(s)
    if s.shape != (x.shape[0], 1):
        raise AutodiffError(f"scale_rows: need ({x.shape[0]}, 1) scales, got {s.shape}")
    xv, sv = x.value, s.value
    return _make(xv * sv, (x, s),
                 lambda g: (g * sv, (g * xv).sum(axis=1, keepdims=True)))


def dot(a, b) -> Tensor:
    """Frobenius inner product, returned as 1x1."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise AutodiffError(f"dot: shapes {a.shape} and {b.shape} differ")
    av, bv = a.value, b.value
    return _make(np.array([[np.sum(av * bv)]]), (a, b),
                 lambda g: (g[0, 0] * bv, g[0, 0] * av))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.T.copy(), (a,), lambda g: (g.T,))


def reshape(a, shape: tuple[int, int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def row_gather(x, index) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    n = x.shape[0]

    def back(g):
        out = np.zeros((n, g.shape[1]))
        np.add.at(out, idx, g)
        return (out,)

    return _make(x.value[idx], (x,), back)


def take_cols(x, cols) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(cols, dtype=np.int64) if not isinstance(cols, slice) else cols
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        if isinstance(idx, slice):
            out[:, idx] = g
        else:
            np.add.at(out.T, idx, g.T)
        return (out,)

    return _make(x.value[:, idx], (x,), back)


def concat_cols(parts: Iterable) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise AutodiffError(f"concat_cols: row counts differ {sorted(rows)}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def back(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _make(np.concatenate([p.value for p in parts], axis=1), parts, back)


def reduce_sum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        return _make(np.array([[x.value.sum()]]), (x,),
                     lambda g: (np.full(shape, g[0, 0]),))
    val = x.value.sum(axis=axis, keepdims=True)
    return _make(val, (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0
    return _make(x.value * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    factor = np.where(x.value > 0, 1.0, slope)
    return _make(x.value * factor, (x,), lambda g: (g * factor,))


def gelu(x) -> Tensor:
    """Exact (erf) GELU."""
    x = as_tensor(x)
    xv = x.value
    cdf = 0.5 * (1.0 + erf(xv / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * xv * xv) / math.sqrt(2.0 * math.pi)
    return _make(xv * cdf, (x,), lambda g: (g * (cdf + xv * pdf),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.value)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sin(x) -> Tensor:
    x = as_tensor(x)
    xv = x.value
    return _make(np.sin(xv), (x,), lambda g: (g * np.cos(xv),))


def cos(x) -> Tensor:
    x = as_tensor(x)
    xv = x.value
    return _make(np.cos(xv), (x,), lambda g: (-g * np.sin(xv),))


def mse_loss(pred, target) -> Tensor:
    """Mean of squared differences over all entries."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise AutodiffError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    diff = pred.value - target.value
    scale = 2.0 / diff.size
    need_target = target.requires_grad

    def back(g):
        d = (g[0, 0] * scale) * diff
        return (d, -d if need_target else None)

    return _make(np.array([[np.dot(diff.ravel(), diff.ravel()) / diff.size]]), (pred, target), back)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of row-wise softmax against integer ``labels``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    z = logits.value
    if labels.shape[0] != z.shape[0]:
        raise AutodiffError("softmax_cross_entropy: one label per row required")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    rows = np.arange(z.shape[0])
    loss = -logp[rows, labels].mean()
    probs = np.exp(logp)

    def back(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        return (g[0, 0] * d / z.shape[0],)

    return _make(np.array([[loss]]), (logits,), back)


def linear_map(apply: Callable[[np.ndarray], np.ndarray],
               apply_transpose: Callable[[np.ndarray], np.ndarray], x) -> Tensor:
    """Apply a fixed linear operator to ``x``; gradient uses its transpose."""
    x = as_tensor(x)
    return _make(apply(x.value), (x,), lambda g: (apply_transpose(g),))


def segment_sum(x, segments, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` buckets given by ``segments``."""
    x = as_tensor(x)
    seg = np.asarray(segments, dtype=np.int64)
    out = np.zeros((num_segments, x.shape[1]))
    np.add.at(out, seg, x.value)
    return _make(out, (x,), lambda g: (g[seg],))


def segment_softmax(scores, segments, num_segments: int) -> Tensor:
    """Softmax of a column of scores within each segment."""
    scores = as_tensor(scores)
    if scores.shape[1] != 1:
        raise AutodiffError("segment_softmax expects a single column")
    seg = np.asarray(segments, dtype=np.int64)
    s = scores.value[:, 0]
    peak = np.full(num_segments, -np.inf)
    np.maximum.at(peak, seg, s)
    e = np.exp(s - peak[seg])
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, e)
    alpha = e / denom[seg]

    def back(g):
        ga = g[:, 0]
        inner = np.zeros(num_segments)
        np.add.at(inner, seg, ga * alpha)
        return ((alpha * (ga - inner[seg]))[:, None],)

    return _make(alpha[:, None], (scores,), back)


def masked_softmax(scores, mask) -> Tensor:
    """Row-wise softmax of a square score matrix over entries where ``mask`` is true.

    Masked-out entries get weight exactly zero; every row needs one allowed entry.
    """
    scores = as_tensor(scores)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        raise AutodiffError(f"masked_softmax: mask {mask.shape} vs scores {scores.shape}")
    if not mask.any(axis=1).all():
        raise AutodiffError("masked_softmax: a row has no allowed entries")
    s = np.where(mask, scores.value, -np.inf)
    e = np.exp(s - s.max(axis=1, keepdims=True))
    alpha = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (alpha * (g - (g * alpha).sum(axis=1, keepdims=True)),)

    return _make(alpha, (scores,), back)


# ------------------------------------------------------------- checking aids

def jacobian(fn: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    """Full Jacobian d fn(x) / d x by one reverse sweep per output entry.

    Returns an array of shape ``fn(x).shape + x.shape``.
    """
    x = np.asarray(x, dtype=np.float64)
    out_shape = as_tensor(fn(Tensor(x))).shape
    jac = np.zeros(out_shape + x.shape)
    for i in range(out_shape[0]):
        for j in range(out_shape[1]):
            leaf = Tensor(x, requires_grad=True)
            with Tape() as tape:
                y = fn(leaf)
                sel = np.zeros(out_shape)
                sel[i, j] = 1.0
                probe = dot(y, Tensor(sel))
            grads = tape.backward(probe)
            jac[i, j] = grads.get(leaf, np.zeros(x.shape))
    return jac


def numerical_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray,
                       step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        hi = fn(x)
        x[idx] = orig - step
        lo = fn(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * step)
    return grad
