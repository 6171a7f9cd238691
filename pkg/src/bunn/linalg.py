"""Dense linear algebra used as oracles: a Jacobi symmetric eigensolver and
a scaling-and-squaring matrix exponential."""
from __future__ import annotations

import numpy as np

__all__ = ["sym_eig", "dense_matrix_exp", "LinalgError"]


class LinalgError(ValueError):
    pass


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings of ``m`` (even) indices into ``m - 1`` rounds of disjoint pairs."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        half = m // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def sym_eig(matrix, tol: float = 1e-14, max_sweeps: int = 60,
            symmetry_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied a round of disjoint pairs at a time, so each round
    is a handful of vectorised row/column updates. Returns ascending
    eigenvalues and the matching orthonormal eigenvectors as columns.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinalgError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > symmetry_tol * scale:
        raise LinalgError("matrix is not symmetric")
    n = a.shape[0]
    if n == 1:
        return a[0].copy(), np.ones((1, 1))
    a = 0.5 * (a + a.T)
    m = n + (n % 2)
    if m != n:
        # dummy index decoupled from everything; its eigenpair is dropped later
        a = np.pad(a, ((0, 1), (0, 1)))
    v = np.eye(m)
    rounds = _round_robin(m)
    total = np.sqrt(np.sum(a * a))
    offdiag = ~np.eye(m, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a[offdiag] ** 2))
        if off <= tol * total:
            break
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            active = np.abs(apq) > 1e-300
            theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            big = np.abs(theta) > 1e150
            safe = np.where(big, 1.0, theta)
            t = np.sign(safe) / (np.abs(safe) + np.sqrt(safe * safe + 1.0))
            t = np.where(big, 0.5 / np.where(big, theta, 1.0), t)
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # rows: A <- J^T A
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            # columns: A <- A J
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    else:
        raise LinalgError("Jacobi iteration did not converge")
    vals = np.diag(a).copy()
    if m != n:
        # the padded coordinate only ever mixes with itself
        keep = np.argsort(-np.abs(v[n, :]))[1:]
        vals, v = vals[keep], v[:n, keep]
    order = np.argsort(vals, kind="stable")
    return vals[order], v[:, order]


def dense_matrix_exp(matrix, taylor_degree: int = 18) -> np.ndarray:
    """exp(M) by scaling and squaring around a Taylor polynomial."""
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinalgError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    norm = np.abs(a).sum(axis=0).max() if n else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    a = a / (2.0 ** squarings)
    eye = np.eye(n)
    result = eye.copy()
    for k in range(taylor_degree, 0, -1):
        result = eye + (a @ result) / k
    for _ in range(squarings):
        result = result @ result
    return result
