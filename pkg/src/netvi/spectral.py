"""Spectral embeddings of adjacency matrices.

The embedding keeps the ``d`` eigenpairs of largest absolute eigenvalue,
reordered so the eigenvalues decrease as real numbers.  Two variants are
exposed: the plain embedding ``X = U |S|^{1/2}`` and the sign-adjusted
embedding ``X~ = U |S|^{1/2} sgn(S)``, whose columns carry the eigenvalue
signs so that indefinite models need no externally supplied signature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from .graph_model import Graph

__all__ = [
    "Embedding",
    "top_d_eigen",
    "ase",
    "signed_ase",
    "embedding_pair",
    "plugin_probs",
    "export_embedding_csv",
]

SELECTION_TIE_TOL = 1e-10
RESIDUAL_TOL = 1e-6
DENSE_SOLVER_MAX_N = 4000


class EigenSelectionError(RuntimeError):
    """Top-d selection by |eigenvalue| is ambiguous at the boundary."""


@dataclass(frozen=True)
class Embedding:
    """Rows are estimated latent positions; one column per kept eigenpair.

    Attributes
    ----------
    X : (n, d) ndarray
        Scaled eigenvector matrix for the chosen variant.
    eigvals : (d,) ndarray
        Kept eigenvalues, decreasing as real numbers.
    signs : (d,) ndarray
        Signs of ``eigvals`` (+1 or -1).
    variant : str
        ``"ase"`` or ``"signed_ase"``.
    """

    X: np.ndarray
    eigvals: np.ndarray
    signs: np.ndarray
    variant: str

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def _as_matrix(A) -> np.ndarray:
    if isinstance(A, Graph):
        return A.A.astype(np.float64)
    M = np.asarray(A, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix or Graph")
    return M


def top_d_eigen(A, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of largest absolute eigenvalue, reordered as reals.

    Parameters
    ----------
    A : Graph or (n, n) array_like
        Symmetric matrix to decompose.
    d : int
        Number of eigenpairs to keep, ``1 <= d <= n``.

    Returns
    -------
    eigvals : (d,) ndarray
        Kept eigenvalues sorted decreasing as real numbers.
    eigvecs : (n, d) ndarray
        Matching orthonormal eigenvectors, each with its largest-magnitude
        entry made positive so results are reproducible.

    Raises
    ------
    EigenSelectionError
        If the d-th and (d+1)-th absolute eigenvalues coincide (within
        1e-10) while the eigenvalues themselves differ, i.e. the selected
        subspace is genuinely ambiguous.  Repeated eigenvalues of equal
        sign are allowed: the span is then well defined.
    """
    M = _as_matrix(A)
    n = M.shape[0]
    if not 1 <= d <= n:
        raise ValueError(f"d must lie in [1, {n}], got {d}")

    if n <= DENSE_SOLVER_MAX_N or d + 1 >= n:
        w, V = np.linalg.eigh(M)
        order = np.argsort(-np.abs(w), kind="stable")
        lam = w[order[:d]]
        vecs = V[:, order[:d]]
        boundary = w[order[d]] if d < n else None
    else:
        w, V = scipy.sparse.linalg.eigsh(M, k=d + 1, which="LM")
        order = np.argsort(-np.abs(w), kind="stable")
        lam = w[order[:d]]
        vecs = V[:, order[:d]]
        boundary = w[order[d]]

    if boundary is not None:
        gap = abs(abs(lam[-1]) - abs(boundary))
        if gap <= SELECTION_TIE_TOL and abs(lam[-1] - boundary) > SELECTION_TIE_TOL:
            raise EigenSelectionError(
                "ambiguous top-d selection: |eigenvalue| tie at the boundary "
                f"({lam[-1]:.12g} vs {boundary:.12g})"
            )

    real_order = np.argsort(-lam, kind="stable")
    lam = lam[real_order]
    vecs = vecs[:, real_order]

    for k in range(d):
        pivot = np.argmax(np.abs(vecs[:, k]))
        if vecs[pivot, k] < 0:
            vecs[:, k] = -vecs[:, k]

    residual = np.linalg.norm(M @ vecs - vecs * lam, axis=0)
    limits = RESIDUAL_TOL * np.maximum(1.0, np.abs(lam))
    if (residual > limits).any():
        raise RuntimeError(
            f"eigenpair residual too large: {residual.max():.3e}"
        )
    return lam, vecs


def ase(A, d: int) -> Embedding:
    """Adjacency spectral embedding ``X = U |S|^{1/2}``."""
    lam, vecs = top_d_eigen(A, d)
    scale = np.abs(lam)
    if (scale <= SELECTION_TIE_TOL).any():
        raise EigenSelectionError("zero eigenvalue among the selected d")
    X = vecs * np.sqrt(scale)
    return Embedding(X=X, eigvals=lam, signs=np.sign(lam), variant="ase")


def signed_ase(A, d: int) -> Embedding:
    """Sign-adjusted embedding ``X~ = U |S|^{1/2} sgn(S)``."""
    return embedding_pair(A, d)[1]


def embedding_pair(A, d: int) -> tuple[Embedding, Embedding]:
    """Both embedding variants from a single eigendecomposition."""
    base = ase(A, d)
    signed = Embedding(
        X=base.X * base.signs,
        eigvals=base.eigvals,
        signs=base.signs,
        variant="signed_ase",
    )
    return base, signed


def plugin_probs(ase_emb: Embedding, signed_emb: Embedding) -> np.ndarray:
    """Plug-in edge probabilities ``p~_{ij} = x_i' x~_j``.

    Equals the rank-d spectral truncation of the decomposed matrix.  Both
    embeddings must come from the same decomposition.
    """
    if ase_emb.variant != "ase" or signed_emb.variant != "signed_ase":
        raise ValueError("expected (ase, signed_ase) embeddings in that order")
    if ase_emb.X.shape != signed_emb.X.shape or not np.allclose(
        ase_emb.eigvals, signed_emb.eigvals
    ):
        raise ValueError("embeddings do not come from the same decomposition")
    return ase_emb.X @ signed_emb.X.T


def export_embedding_csv(emb: Embedding, path) -> None:
    """Write one row per vertex with header x1,...,xd at 17 significant digits."""
    header = ",".join(f"x{k + 1}" for k in range(emb.d))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in emb.X:
            fh.write(",".join(f"{value:.17g}" for value in row) + "\n")
