"""Alternating minimization for low-rank matrix sensing.

Given ``b = A(M)`` for a rank-k matrix ``M``, the solvers alternate exact
least-squares solves for the two factors of ``X = U V^T``:

* :func:`altmin_sense` starts from the top-k left singular vectors of
  ``A^T(b)``; with ``mode="orthonormalized"`` each factor is QR-orthonormalized
  before the opposite solve (same spans, better conditioned).
* :func:`stage_altmin` grows the rank one stage at a time, seeding stage ``i``
  with one projected-gradient (SVP) step from the stage ``i-1`` estimate.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInit, ShapeMismatch
from .linalg import lstsq, orthonormalize, subspace_distance, svd_topk
from .operators import adjoint_sensing, apply_sensing

MODES = ("standard", "orthonormalized")
SVP_STEP = 0.75
DEGENERATE_INIT_TOL = 1e-12


@dataclass
class SolverConfig:
    T: int = 50
    tol: float = 1e-12
    mode: str = "standard"
    ls_regularizer: float = 0.0
    seed: int = 0
    timing: bool = True

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.ls_regularizer < 0:
            raise ValueError("ls_regularizer must be >= 0")


@dataclass
class FactorPair:
    U_hat: np.ndarray
    V_hat: np.ndarray

    def __post_init__(self):
        if self.U_hat.shape[1] != self.V_hat.shape[1]:
            raise ShapeMismatch("factors disagree on k")

    @property
    def k(self):
        return self.U_hat.shape[1]

    def matrix(self):
        return self.U_hat @ self.V_hat.T


@dataclass
class TraceRecord:
    iter: int
    residual: float
    dist_u: float | None = None
    dist_v: float | None = None
    elapsed_ms: float = 0.0


@dataclass
class ConvergenceTrace:
    """Per-iteration history of a solver run.

    Record ``t`` describes the iterate after ``t`` outer iterations; record 0
    is the initializer (its residual is ``||b||``, i.e. ``V`` taken as zero).
    ``half_steps`` holds ``(iter, side, residual)`` after every single-factor
    solve.
    """

    records: list = field(default_factory=list)
    half_steps: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    stage_starts: list = field(default_factory=list)
    stage_pairs: list = field(default_factory=list)
    partitions_used: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        """Numeric column with ``nan`` for missing values."""
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records], dtype=float)

    @property
    def iterations_run(self):
        return self.records[-1].iter if self.records else 0


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self.start = time.perf_counter()

    def ms(self):
        return (time.perf_counter() - self.start) * 1e3 if self.enabled else 0.0


def _dist(X, truth_basis):
    return None if truth_basis is None else subspace_distance(X, truth_basis)


def residual(op, b, pair):
    """``||A(U V^T) - b||_2``."""
    b = np.asarray(b, dtype=np.float64).ravel()
    if pair.U_hat.shape[0] != op.m or pair.V_hat.shape[0] != op.n:
        raise ShapeMismatch("factor shapes do not match the operator")
    return float(np.linalg.norm(apply_sensing(op, pair.matrix()) - b))


def v_design(op, U):
    """d x (n*k) design with row i = vec(A_i^T U), so A(U V^T) = design @ vec(V)."""
    return np.tensordot(op.mats, U, axes=([1], [0])).reshape(op.d, -1)


def u_design(op, V):
    """d x (m*k) design with row i = vec(A_i V), so A(U V^T) = design @ vec(U)."""
    return np.tensordot(op.mats, V, axes=([2], [0])).reshape(op.d, -1)


def _check(op, b, k):
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.shape[0] != op.d:
        raise ShapeMismatch(f"b has length {b.shape[0]}, operator has d={op.d}")
    if not 1 <= k <= min(op.m, op.n):
        raise ValueError(f"k={k} must lie in [1, {min(op.m, op.n)}]")
    return b


def _top_left(G, k):
    svd = svd_topk(G, k)
    s = svd.sigma
    if s[0] == 0.0 or s[-1] < DEGENERATE_INIT_TOL * s[0]:
        raise DegenerateInit(f"initializer matrix has sigma_{k}/sigma_1 = {s[-1] / max(s[0], 1e-300):.3e}")
    return svd


def init_sensing(op, b, k):
    """Top-k left singular vectors of ``sum_i b_i A_i``."""
    b = _check(op, b, k)
    return _top_left(adjoint_sensing(op, b), k).U


def _alternate(op, b, U, cfg, truth, trace, clock, it0=0):
    """Run up to ``cfg.T`` alternations from ``U``; append records after ``it0``."""
    k = U.shape[1]
    orth = cfg.mode == "orthonormalized"
    stop = cfg.tol * np.linalg.norm(b)
    tU = None if truth is None else truth.U[:, :k]
    tV = None if truth is None else truth.V[:, :k]
    V = None
    for t in range(cfg.T):
        it = it0 + t + 1
        if orth:
            U = orthonormalize(U)
        D = v_design(op, U)
        x, deficient = lstsq(D, b, cfg.ls_regularizer)
        if deficient:
            trace.flags.append(f"iter {it}: rank-deficient V-step, min-norm solution used")
        V = x.reshape(op.n, k)
        trace.half_steps.append((it, "V", float(np.linalg.norm(D @ x - b))))

        if orth:
            V = orthonormalize(V)
        D = u_design(op, V)
        x, deficient = lstsq(D, b, cfg.ls_regularizer)
        if deficient:
            trace.flags.append(f"iter {it}: rank-deficient U-step, min-norm solution used")
        U = x.reshape(op.m, k)
        res = float(np.linalg.norm(D @ x - b))
        trace.half_steps.append((it, "U", res))
        trace.records.append(TraceRecord(it, res, _dist(U, tU), _dist(V, tV), clock.ms()))
        if res <= stop:
            break
    return FactorPair(U, V)


def altmin_sense(op, b, k, cfg=None, truth=None, U0=None):
    """Recover a rank-``k`` matrix from ``b = A(M)`` by alternating least squares.

    ``truth`` (an :class:`SvdResult` of ``M``) only populates the distance
    columns of the trace. ``U0`` overrides the spectral initializer.
    Returns ``(FactorPair, ConvergenceTrace)``.
    """
    cfg = cfg or SolverConfig()
    b = _check(op, b, k)
    clock = _clock(cfg)
    U = init_sensing(op, b, k) if U0 is None else np.array(U0, dtype=np.float64)
    if U.shape != (op.m, k):
        raise ShapeMismatch(f"U0 has shape {U.shape}, expected {(op.m, k)}")
    trace = ConvergenceTrace()
    tU = None if truth is None else truth.U[:, :k]
    trace.records.append(TraceRecord(0, float(np.linalg.norm(b)), _dist(U, tU), None, clock.ms()))
    trace.stage_starts.append(0)
    pair = _alternate(op, b, U, cfg, truth, trace, clock)
    return pair, trace


def _clock(cfg):
    return _Clock(cfg.timing)


def stage_altmin(op, b, k, cfg=None, truth=None):
    """Stagewise alternating minimization.

    Stage ``i`` starts from the top-``i`` singular vectors of
    ``X - 3/4 * A^T(A(X) - b)``, where ``X`` is the stage ``i-1`` estimate
    (zero before stage 1), then runs ``cfg.T`` rank-``i`` alternations.
    Stage outputs are kept in ``trace.stage_pairs``; distances in stage ``i``
    are measured against the leading ``i`` true singular vectors.
    """
    cfg = cfg or SolverConfig()
    b = _check(op, b, k)
    clock = _clock(cfg)
    trace = ConvergenceTrace()
    X = np.zeros((op.m, op.n))
    it = 0
    pair = None
    for i in range(1, k + 1):
        G = X - SVP_STEP * adjoint_sensing(op, apply_sensing(op, X) - b)
        U = _top_left(G, i).U
        start_res = float(np.linalg.norm(apply_sensing(op, X) - b))
        tU = None if truth is None else truth.U[:, :i]
        trace.stage_starts.append(len(trace.records))
        trace.records.append(TraceRecord(it, start_res, _dist(U, tU), None, clock.ms()))
        pair = _alternate(op, b, U, cfg, truth, trace, clock, it0=it)
        trace.stage_pairs.append(pair)
        it = trace.records[-1].iter + 1
        X = pair.matrix()
    return pair, trace
