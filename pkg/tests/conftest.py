import numpy as np
import pytest

from bunn.graph import build_graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def complete_graph(n):
    return build_graph(n, [(a, b) for a in range(n) for b in range(a + 1, n)])


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))
