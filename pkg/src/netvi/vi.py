"""Per-vertex Gaussian variational inference via stochastic gradient.

Each vertex gets an independent Gaussian approximation to its posterior
``exp(L_i(x)) pi_i(x)``, parameterized as ``N(mu_i, (1/n) L_i L_i')``
with ``L_i`` lower triangular, positive diagonal.  The KL objective (up
to additive constants) is

    F(mu, L) = -log det L - E_z [ L_i(mu + L z / sqrt(n)) + log pi(...) ],

estimated with fresh standard-normal draws each step and minimized by
Adam with bias correction.  Two wrinkles relative to a plain
reparameterized setup:

* the ``-diag(L)^{-1}`` part of the L-gradient is replaced by a smooth
  surrogate ``-h(diag(L))`` (:func:`h_tilde`) with bounded slope at 0, so
  an overshooting step cannot produce an unbounded gradient;
* both Adam moment accumulators absorb an extra ``1/(s sqrt(n))`` factor
  applied to the summed per-draw gradients.

Initialization comes from the spectral embedding: ``mu`` starts at the
vertex's sign-adjusted embedding row, and ``L`` at the Cholesky factor of
the inverse (clamped) plug-in information matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import one_step
from ._batch import EslBatch, block_size
from .esl import EslContext, default_tau, esl_grad, esl_value
from .graph_model import Graph
from .seeding import substream
from .spectral import embedding_pair

__all__ = [
    "PriorSpec",
    "VertexPosterior",
    "AdamState",
    "SanviOptions",
    "h_tilde",
    "vi_objective_mc",
    "noisy_grads",
    "scaled_grad_L",
    "sanvi_vertex",
    "sanvi_all",
    "export_posterior_csv",
]

CONV_TOL = 1e-6
CONV_EVERY = 10
REPAIR_RIDGE = 1e-8


@dataclass(frozen=True)
class PriorSpec:
    """Prior over one latent position: improper-uniform or Gaussian."""

    kind: str = "improper_uniform"
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("improper_uniform", "gaussian"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "gaussian":
            mean = np.asarray(self.mean, dtype=np.float64)
            cov = np.asarray(self.cov, dtype=np.float64)
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "cov", cov)
            if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
                raise ValueError("gaussian prior needs mean (d,) and cov (d, d)")
            # Fails for non-SPD covariance.
            object.__setattr__(self, "_chol", np.linalg.cholesky(cov))

    @classmethod
    def improper_uniform(cls) -> "PriorSpec":
        return cls()

    @classmethod
    def gaussian(cls, mean, cov) -> "PriorSpec":
        return cls(kind="gaussian", mean=mean, cov=cov)

    @property
    def is_uniform(self) -> bool:
        return self.kind == "improper_uniform"

    def log_density(self, x: np.ndarray) -> float:
        """Log density (the improper uniform contributes 0)."""
        if self.is_uniform:
            return 0.0
        return float(self.log_density_batch(np.asarray(x)[None, :])[0])

    def log_density_batch(self, X: np.ndarray) -> np.ndarray:
        if self.is_uniform:
            return np.zeros(X.shape[0])
        diff = X - self.mean
        sol = scipy.linalg.solve_triangular(self._chol, diff.T, lower=True)
        quad = (sol * sol).sum(axis=0)
        d = self.mean.size
        logdet = 2.0 * np.log(np.diag(self._chol)).sum()
        return -0.5 * (quad + logdet + d * np.log(2.0 * np.pi))

    def grad_log_density(self, x: np.ndarray) -> np.ndarray:
        if self.is_uniform:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        return self.grad_log_density_batch(np.asarray(x)[None, :])[0]

    def grad_log_density_batch(self, X: np.ndarray) -> np.ndarray:
        if self.is_uniform:
            return np.zeros_like(X)
        diff = X - self.mean
        sol = np.linalg.solve(self.cov, diff.T).T
        return -sol


@dataclass(frozen=True)
class VertexPosterior:
    """Gaussian variational state of one vertex.

    ``mu`` is the variational mean, ``L`` the lower-triangular factor of
    the covariance ``(1/n) L L'``, and ``G_hat = (L L')^{-1}`` the
    implied precision estimate (up to the 1/n scaling).
    """

    mu: np.ndarray
    L: np.ndarray
    G_hat: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        L = np.asarray(self.L, dtype=np.float64)
        G_hat = np.asarray(self.G_hat, dtype=np.float64)
        for name, value in (("mu", mu), ("L", L), ("G_hat", G_hat)):
            object.__setattr__(self, name, value)
        d = mu.size
        if L.shape != (d, d) or G_hat.shape != (d, d):
            raise ValueError("inconsistent shapes in VertexPosterior")
        if np.any(np.triu(L, k=1) != 0.0):
            raise ValueError("L must be lower triangular")
        if np.any(np.diag(L) <= 0.0):
            raise ValueError("L must have a positive diagonal")

    @classmethod
    def from_L(cls, mu: np.ndarray, L: np.ndarray) -> "VertexPosterior":
        L = np.asarray(L, dtype=np.float64)
        C = L @ L.T
        return cls(mu=mu, L=L, G_hat=np.linalg.inv(C))


@dataclass
class AdamState:
    """First/second moment accumulators for one vertex's (mu, L) pair."""

    m1_mu: np.ndarray
    m2_mu: np.ndarray
    m1_L: np.ndarray
    m2_L: np.ndarray
    t: int
    alpha0: float
    beta1: float
    beta2: float
    eps0: float

    @classmethod
    def fresh(cls, d: int, opts: "SanviOptions") -> "AdamState":
        return cls(
            m1_mu=np.zeros(d),
            m2_mu=np.zeros(d),
            m1_L=np.zeros((d, d)),
            m2_L=np.zeros((d, d)),
            t=0,
            alpha0=opts.alpha0,
            beta1=opts.beta1,
            beta2=opts.beta2,
            eps0=opts.eps0,
        )


@dataclass(frozen=True)
class SanviOptions:
    """Hyperparameters of the stochastic-gradient loop.

    Defaults follow the experiment protocol: batch size 2, step size
    0.01, moment decays (0.01, 0.95), eps 1e-8, at most 1000 iterations,
    truncation ``min(0.001, e^1.5/n)``.  ``c_n`` (the slope constant of
    :func:`h_tilde`) defaults to ``n``.  The loop stops early when the
    mean has moved less than ``conv_tol * (1 + |mu|)`` over the last
    ``conv_every`` iterations.
    """

    s: int = 2
    alpha0: float = 0.01
    beta1: float = 0.01
    beta2: float = 0.95
    eps0: float = 1e-8
    max_iters: int = 1000
    seed: int | np.random.SeedSequence = 0
    tau: float | None = None
    c_n: float | None = None
    conv_tol: float = CONV_TOL
    conv_every: int = CONV_EVERY

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("batch size s must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("decay rates must lie in [0, 1)")


def h_tilde(x, c_n: float):
    """Bounded-slope surrogate for 1/x used on the diagonal of L.

    Equals ``c/(c x + 1)`` for x > 0 and its C^1 linear continuation
    ``-c^2 x + c`` for x <= 0; approaches 1/x as x grows.
    """
    if c_n <= 0:
        raise ValueError("c_n must be positive")
    x_arr = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(x_arr)
    pos = flat > 0
    out = np.empty_like(flat)
    out[pos] = c_n / (c_n * flat[pos] + 1.0)
    out[~pos] = -c_n * c_n * flat[~pos] + c_n
    return float(out[0]) if x_arr.ndim == 0 else out.reshape(x_arr.shape)


def _check_lower(L: np.ndarray) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if np.any(np.diag(L) <= 0.0):
        raise ValueError("L must have a positive diagonal")
    return L


def vi_objective_mc(ctx: EslContext, prior: PriorSpec, mu, L, z_samples) -> float:
    """Monte Carlo estimate of the KL objective at fixed draws.

    ``-log det L - mean_k [ L_i(mu + L z_k / sqrt(n)) + log pi(...) ]``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    L = _check_lower(L)
    Z = np.atleast_2d(np.asarray(z_samples, dtype=np.float64))
    if Z.shape[0] == 0:
        raise ValueError("z_samples must be nonempty")
    root_n = np.sqrt(ctx.n)
    total = 0.0
    for z in Z:
        x = mu + (L @ z) / root_n
        total += esl_value(ctx, x) + prior.log_density(x)
    logdet = float(np.log(np.diag(L)).sum())
    return -logdet - total / Z.shape[0]


def noisy_grads(ctx: EslContext, prior: PriorSpec, mu, L, z):
    """Exact single-draw gradients of the noisy objective.

    Returns ``(g_mu, g_L)`` where ``g_L`` is lower triangular: the strict
    upper triangle of the outer-product term is zeroed.
    """
    mu = np.asarray(mu, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    root_n = np.sqrt(ctx.n)
    x = mu + (L @ z) / root_n
    g = esl_grad(ctx, x) + prior.grad_log_density(x)
    g_mu = -g
    g_L = -np.tril(np.outer(g, z)) / root_n
    g_L[np.diag_indices_from(g_L)] -= 1.0 / np.diag(L)
    return g_mu, g_L


def scaled_grad_L(ctx: EslContext, prior: PriorSpec, mu, L, z, c_n=None):
    """L-gradient with the diagonal ``1/L_kk`` replaced by ``h_tilde``."""
    mu = np.asarray(mu, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if c_n is None:
        c_n = float(ctx.n)
    root_n = np.sqrt(ctx.n)
    x = mu + (L @ z) / root_n
    g = esl_grad(ctx, x) + prior.grad_log_density(x)
    g_L = -np.tril(np.outer(g, z)) / root_n
    g_L[np.diag_indices_from(g_L)] -= h_tilde(np.diag(L), c_n)
    return g_L


def _repair_L(L: np.ndarray) -> np.ndarray:
    """Restore a positive diagonal by refactoring |diag| plus a ridge."""
    if np.all(np.diag(L) > 0.0):
        return L
    fixed = L.copy()
    idx = np.diag_indices_from(fixed)
    fixed[idx] = np.abs(fixed[idx])
    C = fixed @ fixed.T + REPAIR_RIDGE * np.eye(L.shape[0])
    return np.linalg.cholesky(C)


def sanvi_vertex(
    ctx: EslContext,
    prior: PriorSpec,
    init: VertexPosterior,
    opts: SanviOptions,
    z_bank: np.ndarray | None = None,
) -> VertexPosterior:
    """Run the stochastic-gradient loop for a single vertex.

    Reference implementation: one vertex, plain numpy.  ``z_bank`` with
    shape (max_iters, s, d) overrides the random draws (deterministic
    injection for diagnostics); otherwise draws come from the generator
    seeded by ``opts.seed``.

    A non-positive diagonal of L during the run is not an error (the
    scaled gradient is built for it); the factor is repaired at exit so
    the returned state satisfies the ``VertexPosterior`` invariants.
    """
    n, d = ctx.n, ctx.d
    s = opts.s
    c_n = float(n if opts.c_n is None else opts.c_n)
    root_n = np.sqrt(n)
    scale = 1.0 / (s * root_n)
    rng = None if z_bank is not None else np.random.default_rng(
        opts.seed
        if isinstance(opts.seed, np.random.SeedSequence)
        else np.random.SeedSequence(opts.seed)
    )

    mu = init.mu.astype(np.float64).copy()
    L = init.L.astype(np.float64).copy()
    adam = AdamState.fresh(d, opts)
    mu_mark = mu.copy()

    for t in range(1, opts.max_iters + 1):
        if z_bank is not None:
            Z = np.asarray(z_bank[t - 1], dtype=np.float64).reshape(s, d)
        else:
            Z = rng.standard_normal((s, d))
        sum_gmu = np.zeros(d)
        sum_gmu2 = np.zeros(d)
        sum_gL = np.zeros((d, d))
        sum_gL2 = np.zeros((d, d))
        for k in range(s):
            x = mu + (L @ Z[k]) / root_n
            g = esl_grad(ctx, x) + prior.grad_log_density(x)
            gmu_k = -g
            gL_k = -np.tril(np.outer(g, Z[k])) / root_n
            gL_k[np.diag_indices_from(gL_k)] -= h_tilde(np.diag(L), c_n)
            sum_gmu += gmu_k
            sum_gmu2 += gmu_k * gmu_k
            sum_gL += gL_k
            sum_gL2 += gL_k * gL_k
        adam.t = t
        b1, b2 = adam.beta1, adam.beta2
        adam.m1_mu = b1 * adam.m1_mu + (1.0 - b1) * scale * sum_gmu
        adam.m1_L = b1 * adam.m1_L + (1.0 - b1) * scale * sum_gL
        adam.m2_mu = b2 * adam.m2_mu + (1.0 - b2) * scale * sum_gmu2
        adam.m2_L = b2 * adam.m2_L + (1.0 - b2) * scale * sum_gL2
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        mu = mu - adam.alpha0 * (adam.m1_mu / bc1) / (
            np.sqrt(adam.m2_mu / bc2) + adam.eps0
        )
        L = L - adam.alpha0 * (adam.m1_L / bc1) / (
            np.sqrt(adam.m2_L / bc2) + adam.eps0
        )
        if t % opts.conv_every == 0:
            moved = np.linalg.norm(mu - mu_mark)
            if moved < opts.conv_tol * (1.0 + np.linalg.norm(mu)):
                break
            mu_mark = mu.copy()

    return VertexPosterior.from_L(mu, _repair_L(L))


def default_init(graph: Graph, ase_emb, signed_emb, tau: float):
    """Spectral initialization for every vertex: (mu0, L0) arrays."""
    L0 = one_step.initial_scale_tril(ase_emb, signed_emb, tau)
    return signed_emb.X.copy(), L0


def sanvi_all(
    graph: Graph,
    d: int,
    prior: PriorSpec | None = None,
    opts: SanviOptions | None = None,
    checkpoint=None,
):
    """Variational means and precision estimates for every vertex.

    Computes the embeddings once, initializes each vertex from them, and
    runs the Adam loop for all vertices in vectorized blocks.  Every
    vertex draws from its own RNG substream keyed (seed, vertex), so the
    result is independent of block layout and scheduling.

    Parameters
    ----------
    graph, d : Graph, int
        Data and embedding dimension.
    prior : PriorSpec, optional
        Defaults to the improper uniform prior.
    opts : SanviOptions, optional
    checkpoint : callable, optional
        Diagnostics hook ``checkpoint(t, rows, mu, L)`` invoked every 100
        iterations with the current per-block state.

    Returns
    -------
    X_hat : (n, d) ndarray
        Variational means, one row per vertex.
    G_hats : (n, d, d) ndarray
        Precision estimates ``(L_i L_i')^{-1}``.
    """
    prior = prior or PriorSpec.improper_uniform()
    opts = opts or SanviOptions()
    n = graph.n
    tau = default_tau(n) if opts.tau is None else opts.tau
    ase_emb, signed_emb = embedding_pair(graph, d)
    mu0, L0 = default_init(graph, ase_emb, signed_emb, tau)

    X_hat = np.empty((n, d))
    L_out = np.empty((n, d, d))
    block = block_size(n)
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        mu_b, L_b = _sanvi_block(
            graph, signed_emb.X, mu0[rows], L0[rows], rows, prior, opts, tau,
            checkpoint,
        )
        X_hat[rows] = mu_b
        L_out[rows] = L_b

    covs = np.einsum("nij,nkj->nik", L_out, L_out)
    G_hats = np.linalg.inv(covs)
    G_hats = (G_hats + np.swapaxes(G_hats, 1, 2)) / 2.0
    return X_hat, G_hats


def _sanvi_block(graph, Xt, mu, L, rows, prior, opts, tau, checkpoint):
    """Adam loop for one block of vertices with per-vertex freezing."""
    n = graph.n
    m, d = mu.shape
    s = opts.s
    c_n = float(n if opts.c_n is None else opts.c_n)
    root_n = np.sqrt(n)
    scale = 1.0 / (s * root_n)
    b1, b2 = opts.beta1, opts.beta2
    tril_mask = np.tril(np.ones((d, d)))
    diag_idx = np.arange(d)

    banks = np.empty((m, opts.max_iters, s, d))
    for local, i in enumerate(rows):
        gen = substream(opts.seed, int(i))
        banks[local] = gen.standard_normal((opts.max_iters, s, d))

    batch = EslBatch(Xt, graph.A[rows].astype(np.float64), tau)
    mu = mu.copy()
    L = L.copy()
    m1_mu = np.zeros((m, d))
    m2_mu = np.zeros((m, d))
    m1_L = np.zeros((m, d, d))
    m2_L = np.zeros((m, d, d))
    mu_mark = mu.copy()
    live = np.arange(m)  # original local indices still iterating
    mu_full = mu.copy()
    L_full = L.copy()

    for t in range(1, opts.max_iters + 1):
        Z = banks[:, t - 1]  # (m_live, s, d)
        hdiag = h_tilde(L[:, diag_idx, diag_idx], c_n)
        sum_gmu = np.zeros_like(mu)
        sum_gmu2 = np.zeros_like(mu)
        sum_gL = np.zeros_like(L)
        sum_gL2 = np.zeros_like(L)
        for k in range(s):
            pts = mu + np.einsum("mij,mj->mi", L, Z[:, k]) / root_n
            g = batch.grads(pts)
            if not prior.is_uniform:
                g = g + prior.grad_log_density_batch(pts)
            gmu_k = -g
            gL_k = (g[:, :, None] * Z[:, k, None, :]) * (-tril_mask / root_n)
            gL_k[:, diag_idx, diag_idx] -= hdiag
            sum_gmu += gmu_k
            sum_gmu2 += gmu_k * gmu_k
            sum_gL += gL_k
            sum_gL2 += gL_k * gL_k
        m1_mu = b1 * m1_mu + (1.0 - b1) * scale * sum_gmu
        m1_L = b1 * m1_L + (1.0 - b1) * scale * sum_gL
        m2_mu = b2 * m2_mu + (1.0 - b2) * scale * sum_gmu2
        m2_L = b2 * m2_L + (1.0 - b2) * scale * sum_gL2
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        mu = mu - opts.alpha0 * (m1_mu / bc1) / (np.sqrt(m2_mu / bc2) + opts.eps0)
        L = L - opts.alpha0 * (m1_L / bc1) / (np.sqrt(m2_L / bc2) + opts.eps0)

        if checkpoint is not None and t % 100 == 0:
            mu_full[live] = mu
            L_full[live] = L
            checkpoint(t, rows, mu_full.copy(), L_full.copy())

        if t % opts.conv_every == 0 and t < opts.max_iters:
            moved = np.linalg.norm(mu - mu_mark, axis=1)
            done = moved < opts.conv_tol * (1.0 + np.linalg.norm(mu, axis=1))
            if done.any():
                mu_full[live[done]] = mu[done]
                L_full[live[done]] = L[done]
                keep = ~done
                live = live[keep]
                if live.size == 0:
                    break
                mu = mu[keep]
                L = L[keep]
                m1_mu = m1_mu[keep]
                m2_mu = m2_mu[keep]
                m1_L = m1_L[keep]
                m2_L = m2_L[keep]
                banks = banks[keep]
                batch.shrink(keep)
                mu_mark = mu.copy()
            else:
                mu_mark = mu.copy()

    if live.size:
        mu_full[live] = mu
        L_full[live] = L

    for i in range(m):
        L_full[i] = _repair_L(L_full[i])
    return mu_full, L_full


def export_posterior_csv(X_hat: np.ndarray, L_all: np.ndarray, path) -> None:
    """Per vertex: mean entries, then the row-major lower triangle of L."""
    n, d = X_hat.shape
    mu_cols = [f"mu{k + 1}" for k in range(d)]
    l_cols = [f"L{i + 1}{j + 1}" for i in range(d) for j in range(i + 1)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(mu_cols + l_cols) + "\n")
        for v in range(n):
            parts = [f"{x:.17g}" for x in X_hat[v]]
            parts += [
                f"{L_all[v, i, j]:.17g}" for i in range(d) for j in range(i + 1)
            ]
            fh.write(",".join(parts) + "\n")
