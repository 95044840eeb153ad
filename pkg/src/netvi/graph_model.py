"""Latent-position graph models with an indefinite inner product.

A generalized random dot product graph (GRDPG) places each vertex at a
point ``x_i`` in R^d and connects vertices ``i`` and ``j`` independently
with probability ``rho * x_i' I_{p,q} x_j``, where ``I_{p,q}`` is the
diagonal metric with ``p`` ones followed by ``q`` minus-ones.  Self-loops
are part of the model: the diagonal of the adjacency matrix is sampled
from the same formula.

This module holds the ground-truth containers, the sampler, and the four
simulation scenarios used throughout the experiment harness:

``sbm5``
    rank-two stochastic block model with five blocks.
``dcsbm2``
    rank-two degree-corrected block model with two blocks.
``curve2d``
    rank-two model with positions on a smooth curve in R^2.
``curve3d``
    rank-three model, signature (2, 1), positions on a curve in R^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import substream

__all__ = [
    "Signature",
    "LatentConfig",
    "Graph",
    "ScenarioSpec",
    "SCENARIO_KINDS",
    "make_scenario",
    "sample_grdpg",
    "edge_probability_matrix",
    "write_edge_list",
    "read_edge_list",
]

ORTHOGONALITY_TOL = 1e-8


@dataclass(frozen=True)
class Signature:
    """Metric signature (p, q): p positive and q negative diagonal entries."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("signature requires p >= 1")
        if self.q < 0:
            raise ValueError("signature requires q >= 0")

    @property
    def d(self) -> int:
        return self.p + self.q

    def metric_diagonal(self) -> np.ndarray:
        """Diagonal of I_{p,q} as a length-d vector of +/-1."""
        return np.concatenate([np.ones(self.p), -np.ones(self.q)])


@dataclass(frozen=True)
class LatentConfig:
    """Ground-truth latent positions with their signature and sparsity.

    Attributes
    ----------
    X0 : (n, d) ndarray
        Rows are the latent positions ``x_i``.
    signature : Signature
        Metric signature; ``signature.d`` must equal the column count.
    rho : float
        Sparsity factor in (0, 1] scaling every edge probability.

    The first ``p`` columns of ``X0`` must be orthogonal to the last ``q``
    columns (checked to ``1e-8 * n``).  Edge probabilities are validated
    where they are actually formed (sampling and the probability matrix),
    since the full pairwise check is quadratic in ``n``.
    """

    X0: np.ndarray
    signature: Signature
    rho: float = 1.0

    def __post_init__(self):
        X0 = np.asarray(self.X0, dtype=np.float64)
        object.__setattr__(self, "X0", X0)
        if X0.ndim != 2:
            raise ValueError("X0 must be a 2-d array")
        if X0.shape[1] != self.signature.d:
            raise ValueError(
                f"X0 has {X0.shape[1]} columns but signature dimension is "
                f"{self.signature.d}"
            )
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        p, q = self.signature.p, self.signature.q
        if q > 0:
            cross = X0[:, :p].T @ X0[:, p:]
            limit = ORTHOGONALITY_TOL * max(1, self.n)
            if np.abs(cross).max() > limit:
                raise ValueError(
                    "first p columns of X0 are not orthogonal to last q "
                    f"columns (max inner product {np.abs(cross).max():.3e})"
                )

    @property
    def n(self) -> int:
        return self.X0.shape[0]

    @property
    def d(self) -> int:
        return self.X0.shape[1]


@dataclass(frozen=True)
class Graph:
    """Symmetric binary adjacency matrix; self-loops permitted."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency matrix must be square")
        if not ((A == 0) | (A == 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if not (A == A.T).all():
            raise ValueError("adjacency matrix must be exactly symmetric")
        object.__setattr__(self, "A", A.astype(np.uint8, copy=False))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def edge_cell_count(self) -> int:
        """Number of unit entries in the adjacency matrix (cells, not edges)."""
        return int(self.A.sum())


SCENARIO_KINDS = {
    # kind -> (d, p, q)
    "sbm5": (2, 2, 0),
    "dcsbm2": (2, 2, 0),
    "curve2d": (2, 2, 0),
    "curve3d": (3, 2, 1),
}

_SBM5_BLOCKS = np.array(
    [[0.3, 0.3], [0.5, 0.5], [0.7, 0.7], [0.3, 0.7], [0.7, 0.3]]
)

_DCSBM2_BLOCKS = np.array(
    [
        [3.0 * np.sqrt(10.0) / 10.0, np.sqrt(10.0) / 10.0],
        [np.sqrt(10.0) / 10.0, 3.0 * np.sqrt(10.0) / 10.0],
    ]
)

_THETA_LOW, _THETA_HIGH = 0.05, 0.95


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario: kind, vertex count, and master seed."""

    kind: str
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(
                f"unknown scenario kind {self.kind!r}; "
                f"expected one of {sorted(SCENARIO_KINDS)}"
            )
        d = SCENARIO_KINDS[self.kind][0]
        if self.n < d:
            raise ValueError("scenario requires n >= d")

    @property
    def dims(self) -> tuple[int, int, int]:
        return SCENARIO_KINDS[self.kind]


def make_scenario(spec: ScenarioSpec) -> LatentConfig:
    """Build the ground-truth latent configuration for a scenario.

    Block assignments and degree weights use one RNG substream per vertex,
    keyed (seed, vertex index), so growing ``n`` extends the population
    without reshuffling earlier vertices.  Curve scenarios are
    deterministic: vertex ``i`` (0-based) sits at parameter
    ``t = (i + 1) / n``.
    """
    d, p, q = spec.dims
    n = spec.n
    if spec.kind == "sbm5":
        blocks = _vertex_blocks(spec.seed, n, len(_SBM5_BLOCKS))
        X0 = _SBM5_BLOCKS[blocks]
    elif spec.kind == "dcsbm2":
        blocks = np.empty(n, dtype=np.int64)
        theta = np.empty(n)
        for i in range(n):
            gen = substream(spec.seed, i)
            blocks[i] = gen.integers(len(_DCSBM2_BLOCKS))
            theta[i] = gen.uniform(_THETA_LOW, _THETA_HIGH)
        X0 = theta[:, None] * _DCSBM2_BLOCKS[blocks]
    elif spec.kind == "curve2d":
        t = np.arange(1, n + 1) / n
        X0 = np.column_stack(
            [0.15 * np.sin(np.pi * t) + 0.6, 0.15 * np.cos(np.pi * t) + 0.6]
        )
    elif spec.kind == "curve3d":
        t = np.arange(1, n + 1) / n
        X0 = np.column_stack(
            [
                0.15 * np.sin(2 * np.pi * t) + 0.6,
                0.15 * np.cos(2 * np.pi * t) + 0.6,
                0.15 * np.cos(4 * np.pi * t),
            ]
        )
    else:  # pragma: no cover - guarded by ScenarioSpec
        raise ValueError(spec.kind)
    return LatentConfig(X0=X0, signature=Signature(p, q), rho=1.0)


def scenario_blocks(spec: ScenarioSpec) -> np.ndarray | None:
    """Block labels for block-model scenarios, None for curves."""
    if spec.kind == "sbm5":
        return _vertex_blocks(spec.seed, spec.n, len(_SBM5_BLOCKS))
    if spec.kind == "dcsbm2":
        blocks = np.empty(spec.n, dtype=np.int64)
        for i in range(spec.n):
            blocks[i] = substream(spec.seed, i).integers(len(_DCSBM2_BLOCKS))
        return blocks
    return None


def _vertex_blocks(seed: int, n: int, k: int) -> np.ndarray:
    blocks = np.empty(n, dtype=np.int64)
    for i in range(n):
        blocks[i] = substream(seed, i).integers(k)
    return blocks


def sample_grdpg(config: LatentConfig, seed: int) -> Graph:
    """Draw one adjacency matrix from the model at ``config``.

    The upper triangle, diagonal included, is sampled independently with
    ``P(A_ij = 1) = rho * x_i' I_{p,q} x_j`` and mirrored.  Sampling is
    row-wise so the full probability matrix is never materialized.

    Raises
    ------
    ValueError
        If any edge probability falls outside [0, 1].
    """
    X0 = config.X0
    n = config.n
    Y = X0 * config.signature.metric_diagonal()
    gen = substream(seed)
    A = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        p_row = config.rho * (Y[i] @ X0[i:].T)
        if p_row.min() < 0.0 or p_row.max() > 1.0:
            raise ValueError(
                f"edge probability outside [0, 1] in row {i}: "
                f"range [{p_row.min():.6g}, {p_row.max():.6g}]"
            )
        draws = gen.random(n - i)
        A[i, i:] = draws < p_row
    A = np.maximum(A, A.T)
    return Graph(A=A)


def edge_probability_matrix(config: LatentConfig) -> np.ndarray:
    """Full edge probability matrix ``rho * X0 I_{p,q} X0'`` (symmetric)."""
    Y = config.X0 * config.signature.metric_diagonal()
    P = config.rho * (Y @ config.X0.T)
    return (P + P.T) / 2.0


def write_edge_list(graph: Graph, path) -> None:
    """Serialize a graph as ``n <count>`` header plus 0-based ``i j`` lines.

    One line per unit cell of the upper triangle (diagonal included);
    round-trips exactly through :func:`read_edge_list`.
    """
    iu, ju = np.nonzero(np.triu(graph.A))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.n} {len(iu)}\n")
        for i, j in zip(iu.tolist(), ju.tolist()):
            fh.write(f"{i} {j}\n")


def read_edge_list(path) -> Graph:
    """Inverse of :func:`write_edge_list`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("edge list header must be 'n <count>'")
        n, count = int(header[0]), int(header[1])
        A = np.zeros((n, n), dtype=np.uint8)
        read = 0
        for line in fh:
            tokens = line.split()
            if not tokens:
                continue
            i, j = int(tokens[0]), int(tokens[1])
            A[i, j] = 1
            A[j, i] = 1
            read += 1
    if read != count:
        raise ValueError(f"edge list announced {count} edges, found {read}")
    return Graph(A=A)
