"""Vectorized surrogate-likelihood evaluation for many vertices at once.

The per-vertex functions in :mod:`netvi.esl` are the reference
implementations.  The optimizer and sampler evaluate the objective for a
whole block of vertices per step, so these kernels compute values and
gradients for a batch of (vertex, point) pairs with a handful of full
array passes.  On the interior branch, where both ``psi`` arguments stay
in ``[tau, 1]``, the weight collapses algebraically:

    a psi'(u) - (1 - a) psi'(1 - u) = (a - u) / (u (1 - u))
    a psi(u) + (1 - a) psi(1 - u)  = log(1 - u) + a (log u - log(1 - u))

so only entries with ``u < tau`` or ``u > 1 - tau`` need the piecewise
fix-up, and those are rare once iterates settle near the embedding.
"""

from __future__ import annotations

import numpy as np

from .esl import psi, psi_d1

__all__ = ["EslBatch", "block_size"]


class EslBatch:
    """Reusable buffers and kernels for one (embedding, adjacency-block) pair.

    Parameters
    ----------
    Xt : (n, d) ndarray
        Sign-adjusted embedding shared by every vertex.
    a_rows : (m, n) ndarray
        Adjacency rows (float) of the vertices in this block.
    tau : float
        Truncation level of the surrogate likelihood.
    """

    def __init__(self, Xt: np.ndarray, a_rows: np.ndarray, tau: float):
        self.Xt = np.ascontiguousarray(Xt, dtype=np.float64)
        self.a_rows = np.ascontiguousarray(a_rows, dtype=np.float64)
        self.tau = float(tau)
        m, n = self.a_rows.shape
        if self.Xt.shape[0] != n:
            raise ValueError("a_rows column count must match embedding rows")
        self._U = np.empty((m, n))
        self._V = np.empty((m, n))
        self._W = np.empty((m, n))

    @property
    def m(self) -> int:
        return self.a_rows.shape[0]

    def shrink(self, keep: np.ndarray) -> None:
        """Drop block rows, keeping those flagged in boolean mask ``keep``.

        Buffers are sized for the original block and simply sliced after.
        """
        self.a_rows = np.ascontiguousarray(self.a_rows[keep])

    def _inner(self, pts: np.ndarray) -> np.ndarray:
        m = pts.shape[0]
        U = self._U[:m]
        np.dot(np.ascontiguousarray(pts), self.Xt.T, out=U)
        return U

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Surrogate log-likelihood of vertex k at ``pts[k]``, shape (m,)."""
        tau = self.tau
        m = pts.shape[0]
        a = self.a_rows[:m]
        U = self._inner(pts)
        fix = (U < tau) | (U > 1.0 - tau)
        idx = np.nonzero(fix)
        u_fix = U[idx].copy()
        V = self._V[:m]
        np.subtract(1.0, U, out=V)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            np.log(U, out=U)
            np.log(V, out=V)
            U -= V
            U *= a
            U += V
        if idx[0].size:
            a_fix = a[idx]
            U[idx] = a_fix * psi(u_fix, tau) + (1.0 - a_fix) * psi(
                1.0 - u_fix, tau
            )
        return U.sum(axis=1)

    def grads(self, pts: np.ndarray) -> np.ndarray:
        """Gradient of the surrogate log-likelihood, one row per vertex."""
        tau = self.tau
        m = pts.shape[0]
        a = self.a_rows[:m]
        U = self._inner(pts)
        fix = (U < tau) | (U > 1.0 - tau)
        idx = np.nonzero(fix)
        u_fix = U[idx].copy()
        D = self._V[:m]
        np.multiply(U, U, out=D)
        np.subtract(U, D, out=D)
        W = self._W[:m]
        np.subtract(a, U, out=W)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            W /= D
        if idx[0].size:
            a_fix = a[idx]
            W[idx] = a_fix * psi_d1(u_fix, tau) - (1.0 - a_fix) * psi_d1(
                1.0 - u_fix, tau
            )
        return W @ self.Xt


def block_size(n: int, target_elems: float = 4e6, lo: int = 32) -> int:
    """Rows per block so each (rows, n) buffer stays near ``target_elems``."""
    return max(lo, int(target_elems / max(n, 1)))
