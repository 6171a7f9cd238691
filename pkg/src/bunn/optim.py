"""Adam with bias-corrected moments on flat parameter buffers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step", "NonFiniteGradient"]


# moments of parameters whose gradient stays zero decay geometrically into
# subnormal floats, where numpy arithmetic is over 10x slower; they are
# flushed to zero periodically (their effect on the step is far below eps)
FLUSH_EVERY = 64
FLUSH_BELOW = 1e-150


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    size: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)
    scratch: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)
        self.scratch = np.empty(self.size)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One Adam update of ``params`` in place; returns ``params``."""
    if params.shape != state.m.shape or grads.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"state {state.m.shape}")
    # cheap screen first; a full scan only when the sum is suspicious
    if not math.isfinite(float(grads.sum())) and not np.all(np.isfinite(grads)):
        raise NonFiniteGradient(f"non-finite gradient at step {state.step + 1}")
    if state.weight_decay:
        grads = grads + state.weight_decay * params
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    # moments are kept as plain exponential sums, m / (1 - b1) and v / (1 - b2);
    # both normalisations and the bias corrections fold into two scalars
    state.m *= b1
    state.m += grads
    scratch = state.scratch
    np.multiply(grads, grads, out=scratch)
    state.v *= b2
    state.v += scratch
    v_scale = math.sqrt((1.0 - b2) / (1.0 - b2 ** state.step))
    step_size = state.lr * (1.0 - b1) / (1.0 - b1 ** state.step) / v_scale
    np.sqrt(state.v, out=scratch)
    scratch += state.eps / v_scale
    np.divide(state.m, scratch, out=scratch)
    scratch *= step_size
    params -= scratch
    if state.step % FLUSH_EVERY == 0:
        for moment in (state.m, state.v):
            np.abs(moment, out=scratch)
            moment[scratch < FLUSH_BELOW] = 0.0
    return params
