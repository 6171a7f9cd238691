"""Seeded random streams: one independent Philox generator per (seed, purpose)."""
from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "STREAM_DATA", "STREAM_INIT", "STREAM_ORDER", "STREAM_CHECKS"]

STREAM_DATA = 0
STREAM_INIT = 1
STREAM_ORDER = 2
STREAM_CHECKS = 3


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for ``stream`` under ``seed``; streams never overlap."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))
