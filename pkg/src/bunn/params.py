"""Named parameters backed by one flat buffer, plus weight initialisation."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .autodiff import Tensor

__all__ = ["Parameters", "glorot_uniform"]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Parameters:
    """Ordered collection of named 2-D parameters sharing one flat array.

    Each tensor's value is a view into ``data``; in-place optimiser updates on
    ``data`` are visible through the tensors without copying.
    """

    def __init__(self, arrays: Iterable[tuple[str, np.ndarray]]):
        arrays = [(name, np.atleast_2d(np.asarray(a, dtype=np.float64))) for name, a in arrays]
        names = [name for name, _ in arrays]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        total = sum(a.size for _, a in arrays)
        self.data = np.zeros(total)
        self._slots: dict[str, tuple[int, int, tuple[int, int]]] = {}
        self._tensors: dict[str, Tensor] = {}
        offset = 0
        for name, a in arrays:
            self._slots[name] = (offset, offset + a.size, a.shape)
            self.data[offset:offset + a.size] = a.reshape(-1)
            view = self.data[offset:offset + a.size].reshape(a.shape)
            self._tensors[name] = Tensor(view, requires_grad=True, name=name)
            offset += a.size

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def size(self) -> int:
        return self.data.size

    def names(self) -> list[str]:
        return list(self._tensors)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._tensors.items()}

    def flat_grad(self, grads: dict[Tensor, np.ndarray], out: np.ndarray | None = None,
                  accumulate: bool = False) -> np.ndarray:
        """Gather a gradient dict into the flat layout; missing entries are zero.

        With ``out`` the result is written (or with ``accumulate`` added) in place.
        """
        if out is None:
            out = np.zeros_like(self.data)
            accumulate = True
        elif not accumulate and len(grads) < len(self._tensors):
            out.fill(0.0)
            accumulate = True
        for name, t in self._tensors.items():
            g = grads.get(t)
            if g is not None:
                lo, hi, _ = self._slots[name]
                if accumulate:
                    out[lo:hi] += g.reshape(-1)
                else:
                    out[lo:hi] = g.reshape(-1)
        return out

    def copy(self) -> "Parameters":
        return Parameters(self.arrays().items())

    def set(self, name: str, value) -> None:
        lo, hi, shape = self._slots[name]
        self.data[lo:hi] = np.broadcast_to(np.asarray(value, dtype=np.float64), shape).reshape(-1)
