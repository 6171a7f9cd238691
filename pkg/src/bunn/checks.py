"""Invariant-check suite behind the ``check`` subcommand.

Every check returns a measured error that is compared with a tolerance;
``tolerance_scale`` multiplies all tolerances (values below 1 tighten them).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tape, Tensor, dot, jacobian, numerical_gradient
from .baselines import gat_attention
from .bundles import (
    BundleAssignment, BundleError, bundle_dirichlet_energy, bundle_laplacian_dense, o2_maps,
    householder_maps, default_parity,
)
from .constructions import universal_linear_params
from .graph import build_graph, path_graph, random_connected_graph, rw_laplacian_dense
from .heat import bundle_heat_apply, heat_kernel_dense, make_heat_operator
from .linalg import dense_matrix_exp
from .model import bunn_layer_forward
from .seeding import STREAM_CHECKS, make_rng

__all__ = ["CheckResult", "CHECKS", "run_checks", "format_report", "max_block_error"]


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    passed: bool
    error: float
    tolerance: float
    detail: str = ""


@dataclass(frozen=True)
class _Check:
    check_id: str
    tolerance: float
    fn: Callable[..., tuple[float, str]]


def _random_bundle(rng, n: int, b: int) -> BundleAssignment:
    return BundleAssignment.from_angles(rng.uniform(-math.pi, math.pi, size=(n, b)),
                                        default_parity(b))


def _o2_orthogonality(rng, corrupt):
    theta = rng.uniform(-math.pi, math.pi, size=(20, 4))
    maps = o2_maps(theta, default_parity(4)).value.reshape(-1, 2, 2)
    err = np.abs(np.einsum("mji,mjk->mik", maps, maps) - np.eye(2)).max()
    return float(err), "80 random rotations and reflections"


def _householder_orthogonality(rng, corrupt):
    k = d = 4
    vectors = rng.normal(size=(30, k * d))
    if corrupt:
        vectors[7, d:2 * d] = 0.0
    try:
        maps = householder_maps(vectors, k, d).value.reshape(-1, d, d)
    except BundleError as exc:
        return math.inf, f"construction failed: {exc}"
    err = np.abs(np.einsum("mji,mjk->mik", maps, maps) - np.eye(d)).max()
    return float(err), "30 products of 4 reflections in R^4"


def _path2_closed_form(rng, corrupt):
    g = path_graph(2)
    err = 0.0
    for t in (0.0, 0.5, 1.0, 3.0, 10.0):
        e = math.exp(-2.0 * t)
        exact = 0.5 * np.array([[1 + e, 1 - e], [1 - e, 1 + e]])
        for mode in ("taylor", "spectral") if t <= 1 else ("spectral",):
            op = make_heat_operator(g, t, mode, K=30)
            err = max(err, float(np.abs(op.dense() - exact).max()))
        err = max(err, float(np.abs(heat_kernel_dense(g, t) - exact).max()))
    return err, "P2 kernel against (1 +- exp(-2t)) / 2"


def _limit_rows(rng, corrupt):
    g = path_graph(3)
    dense = make_heat_operator(g, math.inf).dense()
    return float(np.abs(dense - np.array([0.25, 0.5, 0.25])).max()), "P3 at t = inf"


def _spectral_vs_dense(rng, corrupt):
    err = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 17))
        g = random_connected_graph(n, rng)
        x = rng.normal(size=(n, 3))
        for t in (0.5, 4.0, 10.0):
            exact = dense_matrix_exp(-t * rw_laplacian_dense(g)) @ x
            err = max(err, float(np.abs(make_heat_operator(g, t, "spectral").apply(x) - exact).max()))
    return err, "10 random graphs, t in {0.5, 4, 10}"


def _taylor_vs_dense(rng, corrupt):
    err = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 17))
        g = random_connected_graph(n, rng)
        x = rng.normal(size=(n, 3))
        for t in (0.1, 0.25):
            exact = dense_matrix_exp(-t * rw_laplacian_dense(g)) @ x
            err = max(err, float(np.abs(make_heat_operator(g, t, "taylor", K=8).apply(x) - exact).max()))
    return err, "degree-8 series, 10 random graphs, t in {0.1, 0.25}"


def _factorization(rng, corrupt):
    err = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 9))
        g = random_connected_graph(n, rng)
        bundle = _random_bundle(rng, n, 2)
        x = rng.normal(size=(n, 4))
        for t in (0.3, 1.0, 4.0):
            op = make_heat_operator(g, t, "spectral")
            fast = bundle_heat_apply(g, bundle, op, x).value
            exact = (dense_matrix_exp(-t * bundle_laplacian_dense(g, bundle)) @ x.reshape(-1)).reshape(n, 4)
            err = max(err, float(np.abs(fast - exact).max()))
    return err, "bundle heat via synchronised graph heat vs exp(-t L_B)"


def max_block_error(g, bundle: BundleAssignment, weight: np.ndarray, t: float, mode: str = "auto"
                    ) -> float:
    """Largest deviation between the autodiff Jacobian of a linear layer and
    H(t, v, u) * O_v^T W O_u, over every node pair (block-diagonal maps per bundle)."""
    n, c = g.n, weight.shape[0]
    op = make_heat_operator(g, t, mode)
    jac = jacobian(lambda x: bunn_layer_forward(g, bundle, weight, None, x, op, "identity"),
                   np.zeros((n, c)))
    kernel = op.dense()
    mats = bundle.matrices
    blocks = [np.zeros((c, c)) for _ in range(n)]
    for v in range(n):
        for i in range(bundle.b):
            blocks[v][i * bundle.d:(i + 1) * bundle.d, i * bundle.d:(i + 1) * bundle.d] = mats[v, i]
    err = 0.0
    for v in range(n):
        for u in range(n):
            expected = kernel[v, u] * blocks[v].T @ weight @ blocks[u]
            err = max(err, float(np.abs(jac[v, :, u, :] - expected).max()))
    return err


def _jacobian(rng, corrupt):
    err = 0.0
    for _ in range(5):
        n = int(rng.integers(2, 7))
        g = random_connected_graph(n, rng)
        bundle = _random_bundle(rng, n, 2)
        weight = rng.normal(size=(4, 4))
        err = max(err, max_block_error(g, bundle, weight, float(rng.choice([0.5, 1.0, 5.0]))))
    return err, "linear layer, 5 random instances"


def _consensus(rng, corrupt):
    err = 0.0
    for _ in range(5):
        n = int(rng.integers(2, 9))
        g = random_connected_graph(n, rng)
        bundle = _random_bundle(rng, n, 2)
        x = rng.normal(size=(n, 4))
        y = bunn_layer_forward(g, bundle, rng.normal(size=(4, 4)), rng.normal(size=(1, 4)), x,
                               make_heat_operator(g, math.inf), "identity").value
        synced = np.einsum("nbij,nbj->nbi", bundle.matrices, y.reshape(n, 2, 2))
        err = max(err, float(np.abs(synced - synced[0]).max()))
    return err, "t = inf layer outputs agree after synchronisation"


def _energy_monotone(rng, corrupt):
    worst = -math.inf
    for _ in range(5):
        n = int(rng.integers(3, 10))
        g = random_connected_graph(n, rng)
        bundle = _random_bundle(rng, n, 2)
        x = rng.normal(size=(n, 4))
        energies = [bundle_dirichlet_energy(g, bundle, bundle_heat_apply(
            g, bundle, make_heat_operator(g, t, "spectral"), x).value) for t in (0.0, 0.2, 0.5, 1.0, 3.0)]
        worst = max(worst, max(b - a for a, b in zip(energies, energies[1:])))
    return max(worst, 0.0), "largest energy increase along diffusion"


def _attention(rng, corrupt):
    g = random_connected_graph(8, rng)
    alpha = gat_attention(Tensor(rng.normal(size=(3, 5))), Tensor(rng.normal(size=(5, 1))),
                          Tensor(rng.normal(size=(5, 1))), g, rng.normal(size=(8, 3))).value
    return float(np.abs(alpha.sum(axis=1) - 1.0).max()), "GAT rows over closed neighbourhoods"


def _universality(rng, corrupt):
    graphs = [path_graph(2), path_graph(3), build_graph(3, [(0, 1), (1, 2), (0, 2)])]
    c = 2
    targets = [rng.normal(size=(g.n * c, g.n * c)) for g in graphs]
    net = universal_linear_params(graphs, targets, t=1.0, c=c)
    offsets = np.cumsum([0] + [g.n for g in graphs])
    err = 0.0
    for g, target, start in zip(graphs, targets, offsets):
        pe = net.code_book[start:start + g.n]
        for _ in range(10):
            x = rng.normal(size=(g.n, c))
            err = max(err, float(np.abs(net.forward(g, pe, x).reshape(-1) - target @ x.reshape(-1)).max()))
    return err, "{P2, P3, triangle}, c = 2"


def _layer_gradient(rng, corrupt):
    g = random_connected_graph(5, rng)
    op = make_heat_operator(g, 0.7, "taylor")
    theta = rng.uniform(-3, 3, size=(5, 2))
    weight = rng.normal(size=(4, 4))
    x = rng.normal(size=(5, 4))
    probe = rng.normal(size=(5, 4))

    def value(th):
        bundle = BundleAssignment.from_angles(th)
        return float(np.sum(bunn_layer_forward(g, bundle, weight, None, x, op, "tanh").value * probe))

    leaf = Tensor(theta, requires_grad=True)
    with Tape() as tape:
        out = bunn_layer_forward(g, BundleAssignment.from_angles(leaf), weight, None, x, op, "tanh")
        loss = dot(out, Tensor(probe))
    analytic = tape.backward(loss)[leaf]
    numeric = numerical_gradient(value, theta)
    scale = max(1.0, float(np.abs(numeric).max()))
    return float(np.abs(analytic - numeric).max() / scale), "d layer / d angles, relative"


CHECKS = [
    _Check("orthogonality.o2", 1e-12, _o2_orthogonality),
    _Check("orthogonality.householder", 1e-12, _householder_orthogonality),
    _Check("kernel.path2_closed_form", 1e-10, _path2_closed_form),
    _Check("kernel.limit_rows", 1e-14, _limit_rows),
    _Check("kernel.spectral_vs_dense", 1e-7, _spectral_vs_dense),
    _Check("kernel.taylor_vs_dense", 1e-6, _taylor_vs_dense),
    _Check("bundle.heat_factorization", 1e-7, _factorization),
    _Check("bundle.energy_monotone", 1e-12, _energy_monotone),
    _Check("layer.jacobian_blocks", 1e-7, _jacobian),
    _Check("layer.limit_consensus", 1e-8, _consensus),
    _Check("layer.angle_gradient", 1e-5, _layer_gradient),
    _Check("baseline.attention_rows", 1e-10, _attention),
    _Check("construction.universality", 1e-6, _universality),
]


def run_checks(scope: str = "all", tolerance_scale: float = 1.0, corrupt_householder: bool = False,
               seed: int = 0) -> list[CheckResult]:
    """Run the checks whose id starts with ``scope`` (``"all"`` runs everything).

    ``corrupt_householder`` injects a zero reflection vector, a negative
    control that must make ``orthogonality.householder`` fail.
    """
    if tolerance_scale <= 0:
        raise ValueError("tolerance_scale must be positive")
    selected = [c for c in CHECKS if scope == "all" or c.check_id.startswith(scope)]
    if not selected:
        raise ValueError(f"no check matches scope {scope!r}")
    results = []
    for check in selected:
        rng = make_rng(seed, STREAM_CHECKS)
        tol = check.tolerance * tolerance_scale
        try:
            err, detail = check.fn(rng, corrupt_householder)
        except Exception as exc:  # a crash is a failed check, reported by id
            err, detail = math.inf, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(check.check_id, bool(err <= tol), err, tol, detail))
    return results


def format_report(results: list[CheckResult]) -> str:
    width = max(len(r.check_id) for r in results)
    lines = [f"{'check'.ljust(width)}  status  {'error':>10}  {'tolerance':>9}  detail"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.check_id.ljust(width)}  {status:6}  {r.error:10.3e}  {r.tolerance:9.1e}  {r.detail}")
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
