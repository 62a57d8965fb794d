"""Measurement models: Gaussian sensing ensembles and entrywise sampling.

All randomness flows from explicit integer seeds through :func:`make_rng`,
which wraps numpy's Philox counter-based generator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfBounds, ShapeMismatch
from .linalg import as_matrix

PRNG_NAME = "philox4x64-numpy-v1"


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


class SensingOperator:
    """Linear map ``X -> (tr(A_i^T X))_i`` given by ``d`` dense m x n matrices."""

    def __init__(self, mats):
        mats = np.array(mats, dtype=np.float64)
        if mats.ndim != 3 or min(mats.shape) < 1:
            raise ShapeMismatch(f"expected a (d, m, n) stack of matrices, got shape {mats.shape}")
        if not np.all(np.isfinite(mats)):
            raise ValueError("sensing matrices have non-finite entries")
        mats.setflags(write=False)
        self.mats = mats

    @property
    def d(self):
        return self.mats.shape[0]

    @property
    def m(self):
        return self.mats.shape[1]

    @property
    def n(self):
        return self.mats.shape[2]

    @property
    def flat(self):
        """The operator as a d x (m*n) matrix acting on row-major ``vec(X)``."""
        return self.mats.reshape(self.d, -1)

    def __repr__(self):
        return f"SensingOperator(m={self.m}, n={self.n}, d={self.d})"


def gaussian_ensemble(m, n, d, seed):
    """``d`` matrices with i.i.d. N(0, 1/d) entries, so E||A(X)||^2 = ||X||_F^2."""
    rng = make_rng(seed)
    return SensingOperator(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, m, n)))


def complete_ensemble(m, n):
    """All single-entry matrices ``e_i e_j^T`` in row-major order; an exact isometry."""
    return SensingOperator(np.eye(m * n).reshape(m * n, m, n))


def apply_sensing(op, X):
    X = as_matrix(X, "X")
    if X.shape != (op.m, op.n):
        raise ShapeMismatch(f"X has shape {X.shape}, operator expects {(op.m, op.n)}")
    return op.flat @ X.ravel()


def adjoint_sensing(op, b):
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.shape[0] != op.d:
        raise ShapeMismatch(f"b has length {b.shape[0]}, operator has d={op.d}")
    return (b @ op.flat).reshape(op.m, op.n)


def random_low_rank(m, n, k, rng):
    """Product of Gaussian m x k and n x k factors scaled to unit Frobenius norm."""
    X = rng.standard_normal((m, k)) @ rng.standard_normal((n, k)).T
    return X / np.linalg.norm(X)


def estimate_rip_constant(op, k, trials, seed):
    """Monte-Carlo LOWER bound on the rank-``k`` RIP constant of ``op``.

    Returns the largest ``| ||A(X)||^2 - 1 |`` seen over ``trials`` random
    unit-Frobenius rank-``k`` matrices. The true constant is a supremum over
    all such matrices and can only be larger.
    """
    if not 1 <= k <= min(op.m, op.n):
        raise ValueError(f"k={k} must lie in [1, {min(op.m, op.n)}]")
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(trials):
        X = random_low_rank(op.m, op.n, k, rng)
        y = op.flat @ X.ravel()
        worst = max(worst, abs(float(y @ y) - 1.0))
    return worst


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observed entries ``(rows[t], cols[t]) -> values[t]`` of an m x n matrix.

    Entries are kept sorted lexicographically by (row, col).
    """

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise ShapeMismatch("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.m or cols.min() < 0 or cols.max() >= self.n):
            raise IndexOutOfBounds(f"observation index outside the {self.m}x{self.n} grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("observed values must be finite")
        key = rows * self.n + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        if key.size > 1 and np.any(key[1:] == key[:-1]):
            raise ValueError("duplicate (row, col) in observation set")
        for name, arr in (("rows", rows[order]), ("cols", cols[order]), ("values", values[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def keys(self):
        """Linear indices ``row * n + col``."""
        return self.rows * self.n + self.cols

    def subset(self, mask):
        return ObservationSet(self.m, self.n, self.rows[mask], self.cols[mask], self.values[mask])

    def dense(self, scale=1.0):
        """``scale * P_Omega(M)`` as a dense array, zeros off the observed set."""
        out = np.zeros((self.m, self.n))
        out[self.rows, self.cols] = scale * self.values
        return out


def union(parts):
    """Union of observation sets on one grid; repeated indices are kept once."""
    parts = list(parts)
    m, n = parts[0].m, parts[0].n
    rows = np.concatenate([p.rows for p in parts])
    cols = np.concatenate([p.cols for p in parts])
    values = np.concatenate([p.values for p in parts])
    _, first = np.unique(rows * n + cols, return_index=True)
    return ObservationSet(m, n, rows[first], cols[first], values[first])


def sample_omega(M, p, seed):
    """Include each entry of ``M`` independently with probability ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p={p} must lie in (0, 1]")
    M = as_matrix(M, "M")
    mask = make_rng(seed).random(M.shape) < p
    rows, cols = np.nonzero(mask)
    return ObservationSet(M.shape[0], M.shape[1], rows, cols, M[rows, cols])


def partition_omega(omega, T, seed):
    """Split ``omega`` into ``2T + 1`` disjoint parts.

    Every observation is assigned independently and uniformly at random to
    exactly one part.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if len(omega) < 1:
        raise ValueError("cannot partition an empty observation set")
    labels = make_rng(seed).integers(0, 2 * T + 1, size=len(omega))
    return [omega.subset(labels == t) for t in range(2 * T + 1)]


def project_omega(M, omega):
    """Read ``M`` at the index set of ``omega``.

    ``omega`` is an :class:`ObservationSet` (its values are ignored) or a
    pair of row/column index arrays.
    """
    M = as_matrix(M, "M")
    if isinstance(omega, ObservationSet):
        if (omega.m, omega.n) != M.shape:
            raise ShapeMismatch(f"index set is for a {omega.m}x{omega.n} grid, M is {M.shape}")
        rows, cols = omega.rows, omega.cols
    else:
        rows, cols = (np.asarray(x, dtype=np.int64).ravel() for x in omega)
    if rows.size and (rows.min() < 0 or rows.max() >= M.shape[0] or cols.min() < 0 or cols.max() >= M.shape[1]):
        raise IndexOutOfBounds(f"index outside the {M.shape[0]}x{M.shape[1]} grid")
    return ObservationSet(M.shape[0], M.shape[1], rows, cols, M[rows, cols])
