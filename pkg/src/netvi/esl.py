"""Per-vertex surrogate log-likelihood over the whole of R^d.

The exact Bernoulli log-likelihood of one latent position is awkward: its
domain is carved out by the constraints ``0 < x' x~_j < 1`` and its
gradient blows up at the boundary.  Two modifications fix this.  First,
the unknown neighbor positions are replaced by rows of the sign-adjusted
spectral embedding.  Second, ``log`` is replaced by ``psi``, a C^2
function equal to ``log`` on ``[tau, 1]`` and extended by quadratics on
both sides, which makes the objective

    L_i(x) = sum_j  A_ij psi(x' x~_j) + (1 - A_ij) psi(1 - x' x~_j)

finite, smooth, and strongly concave on all of R^d.  Its unique maximizer
(computed by :func:`mesle`) is the refined point estimate of vertex i's
latent position, and ``exp(L_i)`` times a prior is the target density for
both the variational and MCMC posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_model import Graph
from .spectral import Embedding, signed_ase

__all__ = [
    "EslContext",
    "MesleResult",
    "default_tau",
    "psi",
    "psi_d1",
    "psi_d2",
    "esl_value",
    "esl_grad",
    "esl_hess",
    "mesle",
    "mesle_all",
]

GRAD_TOL_PER_VERTEX = 1e-9
MAX_NEWTON_ITERS = 100
MAX_HALVINGS = 30


def default_tau(n: int) -> float:
    """Default truncation level ``min(0.001, e^{1.5} / n)``."""
    return min(0.001, float(np.exp(1.5)) / n)


@dataclass(frozen=True)
class EslContext:
    """Inputs of the surrogate log-likelihood for one vertex.

    Attributes
    ----------
    Xt : (n, d) ndarray
        Sign-adjusted embedding; row j is x~_j.
    a_row : (n,) ndarray
        Adjacency row of the vertex, entries in {0, 1}.
    index : int
        The vertex id; ``Xt[index]`` seeds the Newton iteration.
    tau : float
        Truncation level, 0 < tau < 1/2.
    """

    Xt: np.ndarray
    a_row: np.ndarray
    index: int
    tau: float

    def __post_init__(self):
        Xt = np.asarray(self.Xt, dtype=np.float64)
        a_row = np.asarray(self.a_row, dtype=np.float64)
        object.__setattr__(self, "Xt", Xt)
        object.__setattr__(self, "a_row", a_row)
        if not 0.0 < self.tau < 0.5:
            raise ValueError("tau must lie in (0, 1/2)")
        if Xt.ndim != 2 or a_row.shape != (Xt.shape[0],):
            raise ValueError("a_row length must match the row count of Xt")
        if not 0 <= self.index < Xt.shape[0]:
            raise ValueError("vertex index out of range")

    @property
    def n(self) -> int:
        return self.Xt.shape[0]

    @property
    def d(self) -> int:
        return self.Xt.shape[1]

    @classmethod
    def for_vertex(
        cls, graph: Graph, emb: Embedding, index: int, tau: float | None = None
    ) -> "EslContext":
        """Context for one vertex of a graph with its signed embedding."""
        if emb.variant != "signed_ase":
            raise ValueError("EslContext requires the sign-adjusted embedding")
        if tau is None:
            tau = default_tau(graph.n)
        return cls(Xt=emb.X, a_row=graph.A[index], index=index, tau=tau)


class MesleConvergenceError(RuntimeError):
    """Newton iteration failed to reach the gradient tolerance."""

    def __init__(self, grad_norm: float, iterations: int):
        self.grad_norm = grad_norm
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(gradient norm {grad_norm:.3e})"
        )


@dataclass(frozen=True)
class MesleResult:
    """Maximizer of the surrogate log-likelihood for one vertex."""

    x_hat: np.ndarray
    iterations: int
    grad_norm: float
    hessian: np.ndarray


def _piecewise(t, tau: float, mid_fn, lo_fn, hi_fn):
    t_arr = np.asarray(t, dtype=np.float64)
    flat = np.atleast_1d(t_arr)
    lo = flat < tau
    hi = flat > 1.0
    mid = ~(lo | hi)
    out = np.empty_like(flat)
    out[mid] = mid_fn(flat[mid])
    out[lo] = lo_fn(flat[lo])
    out[hi] = hi_fn(flat[hi])
    return float(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


def psi(t, tau: float):
    """C^2 extension of log: exact on [tau, 1], quadratic outside."""
    if not 0.0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    shift = np.log(tau) - 1.5
    return _piecewise(
        t,
        tau,
        np.log,
        lambda v: -v * v / (2.0 * tau * tau) + 2.0 * v / tau + shift,
        lambda v: -v * v / 2.0 + 2.0 * v - 1.5,
    )


def psi_d1(t, tau: float):
    """First derivative of :func:`psi`; positive and strictly decreasing."""
    if not 0.0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    return _piecewise(
        t,
        tau,
        lambda v: 1.0 / v,
        lambda v: -v / (tau * tau) + 2.0 / tau,
        lambda v: 2.0 - v,
    )


def psi_d2(t, tau: float):
    """Second derivative of :func:`psi`; lies in [-1/tau^2, -1]."""
    if not 0.0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    return _piecewise(
        t,
        tau,
        lambda v: -1.0 / (v * v),
        lambda v: np.full_like(v, -1.0 / (tau * tau)),
        lambda v: np.full_like(v, -1.0),
    )


def esl_value(ctx: EslContext, x: np.ndarray) -> float:
    """Surrogate log-likelihood at ``x``; finite for every x in R^d."""
    u = ctx.Xt @ np.asarray(x, dtype=np.float64)
    a = ctx.a_row
    return float(a @ psi(u, ctx.tau) + (1.0 - a) @ psi(1.0 - u, ctx.tau))


def esl_grad(ctx: EslContext, x: np.ndarray) -> np.ndarray:
    """Gradient of the surrogate log-likelihood at ``x``."""
    u = ctx.Xt @ np.asarray(x, dtype=np.float64)
    a = ctx.a_row
    w = a * psi_d1(u, ctx.tau) - (1.0 - a) * psi_d1(1.0 - u, ctx.tau)
    return ctx.Xt.T @ w


def esl_hess(ctx: EslContext, x: np.ndarray) -> np.ndarray:
    """Hessian at ``x``; negative definite whenever Xt has full column rank."""
    u = ctx.Xt @ np.asarray(x, dtype=np.float64)
    a = ctx.a_row
    c = a * psi_d2(u, ctx.tau) + (1.0 - a) * psi_d2(1.0 - u, ctx.tau)
    H = (ctx.Xt * c[:, None]).T @ ctx.Xt
    return (H + H.T) / 2.0


def mesle(ctx: EslContext, x0: np.ndarray | None = None) -> MesleResult:
    """Newton maximizer of the surrogate log-likelihood for one vertex.

    Starts at the vertex's own embedding row (or ``x0``), takes damped
    Newton steps (halving until the objective increases), and stops when
    the gradient norm falls below ``1e-9 * n``.

    Raises
    ------
    MesleConvergenceError
        If 100 iterations do not reach the tolerance.
    """
    x = np.array(ctx.Xt[ctx.index] if x0 is None else x0, dtype=np.float64)
    tol = GRAD_TOL_PER_VERTEX * ctx.n
    value = esl_value(ctx, x)
    grad = esl_grad(ctx, x)
    grad_norm = float(np.linalg.norm(grad))
    iterations = 0
    while grad_norm > tol:
        if iterations >= MAX_NEWTON_ITERS:
            raise MesleConvergenceError(grad_norm, iterations)
        iterations += 1
        H = esl_hess(ctx, x)
        step = np.linalg.solve(H, grad)
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = x - scale * step
            candidate_value = esl_value(ctx, candidate)
            if candidate_value > value:
                break
            scale /= 2.0
        x = candidate
        value = candidate_value
        grad = esl_grad(ctx, x)
        grad_norm = float(np.linalg.norm(grad))
    return MesleResult(
        x_hat=x,
        iterations=iterations,
        grad_norm=grad_norm,
        hessian=esl_hess(ctx, x),
    )


def mesle_all(graph: Graph, d: int, tau: float | None = None) -> np.ndarray:
    """Maximize the surrogate log-likelihood for every vertex.

    Returns the (n, d) matrix whose row i is the maximizer for vertex i.
    """
    emb = signed_ase(graph, d)
    if tau is None:
        tau = default_tau(graph.n)
    X_hat = np.empty((graph.n, d))
    for i in range(graph.n):
        ctx = EslContext(Xt=emb.X, a_row=graph.A[i], index=i, tau=tau)
        X_hat[i] = mesle(ctx).x_hat
    return X_hat
