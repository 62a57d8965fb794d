"""Alternating minimization for matrix completion.

The observed set is split into ``2T + 1`` disjoint parts. Part 0 feeds a
clipped spectral initializer; each later half-step consumes a fresh part, and
each least-squares solve decouples into one k-variable problem per column
(V-step) or row (U-step).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ClippedToRankDeficient, EmptyPartition, NotOrthonormal, RankDeficient, ShapeMismatch
from .linalg import orthonormalize, spectral_norm, svd_topk
from .operators import union
from .sensing import ConvergenceTrace, FactorPair, SolverConfig, TraceRecord, _clock, _dist

ORTHONORMAL_TOL = 1e-8


@dataclass
class IncoherenceReport:
    mu: float
    max_row_norm: float
    argmax_row: int


@dataclass
class CompletionProblem:
    partitions: list
    m: int
    n: int
    k: int
    p_hat: float | None = None

    def __post_init__(self):
        if not self.partitions:
            raise ValueError("at least one partition is required")
        for part in self.partitions:
            if (part.m, part.n) != (self.m, self.n):
                raise ShapeMismatch("partitions must share the problem's m x n grid")
        if self.p_hat is None:
            # Unbiased under uniform sampling: E|Omega_0| = p * m * n / (2T + 1).
            self.p_hat = min(1.0, len(self.partitions[0]) * len(self.partitions) / (self.m * self.n))
        if not 0.0 < self.p_hat <= 1.0:
            raise ValueError(f"p_hat={self.p_hat} must lie in (0, 1]")

    @property
    def T(self):
        return (len(self.partitions) - 1) // 2


def incoherence_of(U):
    """``mu = sqrt(m / k) * max_i ||U[i]||`` for orthonormal ``U``."""
    U = np.asarray(U, dtype=np.float64)
    m, k = U.shape
    if spectral_norm(U.T @ U - np.eye(k)) > ORTHONORMAL_TOL:
        raise NotOrthonormal("incoherence is defined for orthonormal columns only")
    norms = np.linalg.norm(U, axis=1)
    i = int(np.argmax(norms))
    return IncoherenceReport(float(np.sqrt(m / k) * norms[i]), float(norms[i]), i)


def clip_threshold(mu, k, rows):
    return 2.0 * mu * np.sqrt(k) / np.sqrt(rows)


def clip_and_orthonormalize(U0, threshold):
    """Zero every entry with magnitude above ``threshold``, then re-orthonormalize."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    clipped = np.where(np.abs(U0) > threshold, 0.0, U0)
    try:
        return orthonormalize(clipped)
    except RankDeficient as exc:
        raise ClippedToRankDeficient(f"clipping at {threshold:.4g} destroyed column rank") from exc


def init_complete(part0, p_hat, k, mu):
    """Clipped top-k left singular vectors of ``P_Omega0(M) / p_hat``."""
    if len(part0) == 0:
        raise EmptyPartition("initialization partition is empty")
    if not 0.0 < p_hat <= 1.0:
        raise ValueError(f"p_hat={p_hat} must lie in (0, 1]")
    U0 = svd_topk(part0.dense(1.0 / p_hat), k).U
    return clip_and_orthonormalize(U0, clip_threshold(mu, k, part0.m))


def solve_row_block(U, part, side, ridge=0.0, trace=None):
    """Solve the decoupled least-squares problems for one factor.

    ``side="V"``: ``U`` (m x k) is fixed and column ``j`` of the result is
    ``argmin_v sum_{(i,j) observed} (M_ij - <U[i], v>)^2``, giving an n x k
    matrix. ``side="U"``: ``U`` plays the role of the fixed n x k factor and
    the solve runs over rows, giving m x k. Unobserved columns (rows) get a
    zero vector; singular systems get the minimum-norm solution.
    """
    if len(part) == 0:
        raise EmptyPartition("cannot solve against an empty partition")
    if side == "V":
        fixed_idx, free_idx, size = part.rows, part.cols, part.n
        expect = part.m
    elif side == "U":
        fixed_idx, free_idx, size = part.cols, part.rows, part.m
        expect = part.n
    else:
        raise ValueError("side must be 'V' or 'U'")
    U = np.asarray(U, dtype=np.float64)
    if U.shape[0] != expect:
        raise ShapeMismatch(f"fixed factor has {U.shape[0]} rows, expected {expect}")
    k = U.shape[1]

    order = np.argsort(free_idx, kind="stable")
    free_sorted = free_idx[order]
    bounds = np.searchsorted(free_sorted, np.arange(size + 1))
    out = np.zeros((size, k))
    missing = []
    singular = 0
    for j in range(size):
        sel = order[bounds[j] : bounds[j + 1]]
        if sel.size == 0:
            missing.append(j)
            continue
        A = U[fixed_idx[sel]]
        y = part.values[sel]
        if ridge > 0:
            A = np.vstack([A, np.sqrt(ridge) * np.eye(k)])
            y = np.concatenate([y, np.zeros(k)])
        x, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        singular += rank < k
        out[j] = x
    if trace is not None:
        what = "columns" if side == "V" else "rows"
        if missing:
            trace.flags.append(f"{side}-step: {len(missing)} unobserved {what} set to zero")
        if singular:
            trace.flags.append(f"{side}-step: {singular} singular {what} solved by min-norm")
    return out


def _observed_residual(pair, obs):
    fit = np.einsum("ij,ij->i", pair.U_hat[obs.rows], pair.V_hat[obs.cols])
    return float(np.linalg.norm(fit - obs.values))


def altmin_complete(problem, cfg=None, mu=3.0, truth=None):
    """Complete a rank-``k`` matrix from partitioned observations.

    Part 0 initializes ``U``; iteration ``t`` solves ``V`` on part ``t + 1``
    and ``U`` on part ``T + t + 1``. Residuals are measured on the union of
    all parts. Returns ``(FactorPair, ConvergenceTrace)``.
    """
    cfg = cfg or SolverConfig()
    parts = problem.partitions
    T, k = cfg.T, problem.k
    if len(parts) != 2 * T + 1:
        raise ValueError(f"expected {2 * T + 1} partitions for T={T}, got {len(parts)}")
    clock = _clock(cfg)
    orth = cfg.mode == "orthonormalized"
    observed = union(parts)
    stop = cfg.tol * np.linalg.norm(observed.values)
    tU = None if truth is None else truth.U[:, :k]
    tV = None if truth is None else truth.V[:, :k]

    trace = ConvergenceTrace()
    U = init_complete(parts[0], problem.p_hat, k, mu)
    trace.partitions_used.append(0)
    trace.stage_starts.append(0)
    trace.records.append(TraceRecord(0, float(np.linalg.norm(observed.values)), _dist(U, tU), None, clock.ms()))

    pair = None
    for t in range(T):
        it = t + 1
        if orth:
            U = orthonormalize(U)
        V = solve_row_block(U, parts[t + 1], "V", cfg.ls_regularizer, trace)
        trace.partitions_used.append(t + 1)
        trace.half_steps.append((it, "V", _observed_residual(FactorPair(U, V), observed)))

        if orth:
            V = orthonormalize(V)
        U = solve_row_block(V, parts[T + t + 1], "U", cfg.ls_regularizer, trace)
        trace.partitions_used.append(T + t + 1)
        pair = FactorPair(U, V)
        res = _observed_residual(pair, observed)
        trace.half_steps.append((it, "U", res))
        trace.records.append(TraceRecord(it, res, _dist(U, tU), _dist(V, tV), clock.ms()))
        if res <= stop:
            break
    return pair, trace
