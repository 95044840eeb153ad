"""Error metrics and clustering utilities for estimated latent positions.

Latent positions are only identified up to an orthogonal transformation,
so estimation error is measured after optimal alignment:

    SSE(X, X0) = min over orthogonal W of ||X W - X0||_F^2,

minimized in closed form by the Procrustes rotation from the SVD of
``X' X0`` (reflections included; the minimum is over all of O(d)).
Community-recovery experiments cluster embeddings with a Gaussian
mixture fit by EM and score the labels with the adjusted Rand index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, stdtr

from .seeding import substream

__all__ = [
    "AlignmentResult",
    "procrustes_sse",
    "paired_t_test",
    "GmmModel",
    "gmm_fit",
    "gmm_assign",
    "adjusted_rand_index",
]

GMM_RESTARTS = 20
GMM_MAX_ITERS = 200
GMM_RIDGE = 1e-6
GMM_REL_TOL = 1e-8


@dataclass(frozen=True)
class AlignmentResult:
    """Optimal orthogonal alignment and the resulting squared error."""

    W: np.ndarray
    sse: float


def procrustes_sse(X_hat: np.ndarray, X0: np.ndarray) -> AlignmentResult:
    """Minimize ``||X_hat W - X0||_F^2`` over orthogonal ``W``.

    ``W = U V'`` from the SVD ``X_hat' X0 = U S V'`` attains the global
    minimum over O(d), reflections allowed.
    """
    X_hat = np.asarray(X_hat, dtype=np.float64)
    X0 = np.asarray(X0, dtype=np.float64)
    if X_hat.shape != X0.shape:
        raise ValueError(
            f"shape mismatch: {X_hat.shape} vs {X0.shape}"
        )
    U, _, Vt = np.linalg.svd(X_hat.T @ X0)
    W = U @ Vt
    sse = float(np.linalg.norm(X_hat @ W - X0) ** 2)
    return AlignmentResult(W=W, sse=sse)


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test on equal-length samples.

    Returns ``(t_stat, p_value)`` with the p-value from the Student-t
    distribution with ``len(a) - 1`` degrees of freedom.

    Raises
    ------
    ValueError
        On mismatched lengths, fewer than two pairs, or zero variance of
        the differences.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-d and of equal length")
    if a.size < 2:
        raise ValueError("need at least two pairs")
    diff = a - b
    sd = diff.std(ddof=1)
    if sd == 0.0:
        raise ValueError("zero variance of the differences")
    n = diff.size
    t_stat = float(diff.mean() / (sd / np.sqrt(n)))
    p_value = float(2.0 * stdtr(n - 1, -abs(t_stat)))
    return t_stat, p_value


@dataclass(frozen=True)
class GmmModel:
    """Full-covariance Gaussian mixture with its final log-likelihood."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float


def _kmeanspp_centers(X: np.ndarray, k: int, gen: np.random.Generator):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[gen.integers(n)]
    dist2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = dist2.sum()
        if total <= 0.0:
            centers[j] = X[gen.integers(n)]
        else:
            centers[j] = X[gen.choice(n, p=dist2 / total)]
        dist2 = np.minimum(dist2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _log_gauss(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    chol = np.linalg.cholesky(cov)
    diff = X - mean
    sol = np.linalg.solve(chol, diff.T)
    quad = (sol * sol).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (quad + logdet + d * np.log(2.0 * np.pi))


def _ridge(cov: np.ndarray) -> np.ndarray:
    d = cov.shape[0]
    return cov + (GMM_RIDGE * np.trace(cov) / d) * np.eye(d)


def _em_once(X, k, gen):
    n, d = X.shape
    means = _kmeanspp_centers(X, k, gen)
    base_cov = _ridge(np.cov(X.T).reshape(d, d))
    covs = np.array([base_cov.copy() for _ in range(k)])
    weights = np.full(k, 1.0 / k)
    ll_prev = -np.inf
    trace = []
    for _ in range(GMM_MAX_ITERS):
        log_prob = np.column_stack(
            [np.log(weights[j]) + _log_gauss(X, means[j], covs[j]) for j in range(k)]
        )
        norm = logsumexp(log_prob, axis=1)
        ll = float(norm.sum())
        if not np.isfinite(ll):
            raise RuntimeError("EM produced a non-finite log-likelihood")
        trace.append(ll)
        resp = np.exp(log_prob - norm[:, None])
        counts = resp.sum(axis=0)
        weights = counts / n
        means = (resp.T @ X) / counts[:, None]
        for j in range(k):
            diff = X - means[j]
            cov = (resp[:, j][:, None] * diff).T @ diff / counts[j]
            covs[j] = _ridge((cov + cov.T) / 2.0)
        if abs(ll - ll_prev) < GMM_REL_TOL * (1.0 + abs(ll)):
            break
        ll_prev = ll
    log_prob = np.column_stack(
        [np.log(weights[j]) + _log_gauss(X, means[j], covs[j]) for j in range(k)]
    )
    final_ll = float(logsumexp(log_prob, axis=1).sum())
    trace.append(final_ll)
    return GmmModel(
        weights=weights, means=means, covariances=covs, log_likelihood=final_ll
    ), trace


def gmm_fit(X: np.ndarray, k: int, seed: int = 0, return_trace: bool = False):
    """Fit a full-covariance Gaussian mixture by EM.

    Twenty restarts with k-means++ seeding; each M-step adds a ridge of
    ``1e-6 * trace / d`` to every covariance; the best final
    log-likelihood wins.  With ``return_trace=True`` also returns the
    winning restart's log-likelihood sequence.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    n, d = X.shape
    if n < k * (d + 1):
        raise ValueError(f"need at least k(d+1) = {k * (d + 1)} points")
    best = None
    best_trace = None
    for r in range(GMM_RESTARTS):
        model, trace = _em_once(X, k, substream(seed, r))
        if best is None or model.log_likelihood > best.log_likelihood:
            best, best_trace = model, trace
    if return_trace:
        return best, best_trace
    return best


def gmm_assign(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """Hard labels: argmax responsibility under the fitted mixture."""
    X = np.asarray(X, dtype=np.float64)
    k = model.weights.size
    log_prob = np.column_stack(
        [
            np.log(model.weights[j])
            + _log_gauss(X, model.means[j], model.covariances[j])
            for j in range(k)
        ]
    )
    return log_prob.argmax(axis=1)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement of two partitions; 1 for identical.

    Computed from the contingency table by pair counting.  When the
    expected and maximal indices coincide (both partitions trivial) the
    partitions are identical up to relabeling and the index is 1.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must be 1-d and of equal length")
    if a.size < 2:
        raise ValueError("need at least two items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    total = comb2(a.size)
    expected = sum_rows * sum_cols / total
    maximal = (sum_rows + sum_cols) / 2.0
    if maximal == expected:
        return 1.0
    return float((sum_cells - expected) / (maximal - expected))
