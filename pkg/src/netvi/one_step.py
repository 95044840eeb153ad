"""One-step refinement of the spectral embedding and Fisher information.

The one-step estimator applies a single Newton-type correction to each
embedding row, using plug-in Fisher information built from the embedding
itself:

    x_i^{os} = x_i + G_i^{-1} s_i,
    G_i = (1/n) sum_j  x~_j x~_j' / (p~_ij (1 - p~_ij)),
    s_i = (1/n) sum_j  (A_ij - p~_ij) x~_j / (p~_ij (1 - p~_ij)),

with ``p~_ij = x_i' x~_j`` the plug-in edge probabilities.  The plug-in
probabilities are deliberately left unclamped, so ``p~_ij`` outside
(0, 1) flips the sign of its weight; the resulting instability on graphs
with near-one edge probabilities is a real property of the estimator and
is part of what the experiment harness measures.  Only the variational
initializer uses a clamped variant (:func:`initial_scale_tril`), which
needs a positive-definite matrix to factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_model import Graph, LatentConfig
from .spectral import Embedding, _as_matrix

__all__ = [
    "FisherInfo",
    "fisher_oracle",
    "fisher_plugin",
    "ose",
    "initial_scale_tril",
]

SINGULARITY_RTOL = 1e-12


@dataclass(frozen=True)
class FisherInfo:
    """Per-vertex information matrix; ``kind`` records how it was built.

    Oracle matrices are positive definite.  Plug-in matrices may have
    negative eigenvalues on difficult graphs; nothing here hides that.
    """

    G: np.ndarray
    kind: str


def fisher_oracle(config: LatentConfig, i: int) -> FisherInfo:
    """Fisher information of vertex ``i`` at the true latent positions.

    Assembles ``(1/n) sum_j rho (I x_j)(I x_j)' / (p_ij (1 - p_ij))``
    with ``p_ij`` the true edge probabilities and ``I`` the signature
    metric.

    Raises
    ------
    ValueError
        If any denominator ``p (1 - p)`` is not strictly positive.
    """
    X0 = config.X0
    Y = X0 * config.signature.metric_diagonal()
    p0 = config.rho * (X0 @ Y[i])
    den = p0 * (1.0 - p0)
    if den.min() <= 0.0:
        raise ValueError(
            "degenerate edge probability for vertex "
            f"{i}: p(1-p) in [{den.min():.3e}, {den.max():.3e}]"
        )
    G = (config.rho / config.n) * (Y.T @ (Y / den[:, None]))
    return FisherInfo(G=(G + G.T) / 2.0, kind="oracle")


def _plugin_row(Xb_i, Xt, n, a_i=None):
    """Plug-in info matrix (and score when ``a_i`` given); no clamping."""
    pt = Xt @ Xb_i
    if ((pt == 0.0) | (pt == 1.0)).any():
        raise ValueError("plug-in probability exactly 0 or 1")
    den = pt * (1.0 - pt)
    G = (Xt.T @ (Xt / den[:, None])) / n
    G = (G + G.T) / 2.0
    if a_i is None:
        return G, None
    score = ((a_i - pt) / den) @ Xt / n
    return G, score


def fisher_plugin(ase_emb: Embedding, signed_emb: Embedding, i: int) -> FisherInfo:
    """Plug-in information matrix of vertex ``i`` (may be indefinite)."""
    G, _ = _plugin_row(ase_emb.X[i], signed_emb.X, ase_emb.n)
    return FisherInfo(G=G, kind="plugin")


def _check_invertible(G: np.ndarray) -> None:
    eigs = np.linalg.eigvalsh(G)
    if np.abs(eigs).min() <= SINGULARITY_RTOL * np.abs(eigs).sum():
        raise np.linalg.LinAlgError("singular plug-in information matrix")


def ose(A, ase_emb: Embedding, signed_emb: Embedding) -> np.ndarray:
    """One-step estimator for every vertex; rows are corrected positions.

    ``A`` is usually a :class:`Graph` but any square matrix of the right
    size is accepted (synthetic residual checks feed probabilities).

    Raises
    ------
    numpy.linalg.LinAlgError
        If a plug-in information matrix is numerically singular (an
        eigenvalue of magnitude below 1e-12 of the spectrum's mass).
    ValueError
        If some plug-in probability is exactly 0 or 1.
    """
    M = _as_matrix(A)
    Xb, Xt = ase_emb.X, signed_emb.X
    n = Xb.shape[0]
    if M.shape[0] != n:
        raise ValueError("adjacency size does not match the embeddings")
    X_os = np.empty_like(Xb)
    for i in range(n):
        G, score = _plugin_row(Xb[i], Xt, n, a_i=M[i])
        _check_invertible(G)
        X_os[i] = Xb[i] + np.linalg.solve(G, score)
    return X_os


def initial_scale_tril(
    ase_emb: Embedding, signed_emb: Embedding, tau: float, block: int = 512
) -> np.ndarray:
    """Cholesky factors ``L_i`` with ``L_i L_i' = G_i^{-1}``, clamped.

    The plug-in probabilities are clamped to ``[tau, 1 - tau]`` so every
    ``G_i`` is positive definite and the factorization exists; this seeds
    the variational covariance and is the only place clamping happens.
    Returns an (n, d, d) array of lower-triangular factors.
    """
    Xb, Xt = ase_emb.X, signed_emb.X
    n, d = Xb.shape
    G = np.empty((n, d, d))
    products = [Xt[:, k] * Xt[:, l] for k in range(d) for l in range(k, d)]
    for start in range(0, n, block):
        stop = min(start + block, n)
        P = Xb[start:stop] @ Xt.T
        np.clip(P, tau, 1.0 - tau, out=P)
        W = 1.0 / (n * P * (1.0 - P))
        pos = 0
        for k in range(d):
            for l in range(k, d):
                col = W @ products[pos]
                G[start:stop, k, l] = col
                G[start:stop, l, k] = col
                pos += 1
    return np.linalg.cholesky(np.linalg.inv(G))
