"""Dense linear-algebra kernels shared by the solvers.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`as_matrix` is the
single validating constructor.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DidNotConverge, RankDeficient, ShapeMismatch, ZeroMatrix

# Column-rank test: smallest singular value must exceed RANK_TOL * largest.
RANK_TOL = 1e-12
SVD_MAX_ITER = 500
SVD_TOL = 1e-12
# Singular-triplet residual accepted by svd_topk, relative to sigma_1.
SVD_RESIDUAL_TOL = 1e-10
SVD_OVERSAMPLE = 5
# Singular values below ZERO_SIGMA_TOL * max(m, n) * sigma_1 are reported as 0.
ZERO_SIGMA_TOL = 1e-12


class SvdResult:
    """Truncated SVD ``A ~= U diag(sigma) V^T``."""

    __slots__ = ("U", "sigma", "V")

    def __init__(self, U, sigma, V):
        self.U = U
        self.sigma = sigma
        self.V = V

    @property
    def k(self):
        return self.sigma.shape[0]

    def matrix(self):
        return (self.U * self.sigma) @ self.V.T

    def top(self, i):
        """The leading ``i`` singular triplets."""
        return SvdResult(self.U[:, :i], self.sigma[:i], self.V[:, :i])

    def __iter__(self):
        return iter((self.U, self.sigma, self.V))

    def __repr__(self):
        m, n = self.U.shape[0], self.V.shape[0]
        return f"SvdResult(m={m}, n={n}, sigma={self.sigma!r})"


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def qr_decompose(a, rank_tol=RANK_TOL):
    """Thin QR factorization with a positive diagonal on ``R``.

    Raises :class:`RankDeficient` when ``a`` does not have full column rank.
    """
    a = as_matrix(a)
    m, k = a.shape
    if m < k:
        raise RankDeficient(f"{m}x{k} matrix cannot have full column rank")
    q, r = np.linalg.qr(a)
    s = np.linalg.svd(r, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= rank_tol * s[0]:
        raise RankDeficient(f"column rank test failed (sigma_min/sigma_max = {s[-1] / max(s[0], 1e-300):.3e})")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def orthonormalize(a):
    """Orthonormal basis with the same span as the full-column-rank ``a``."""
    return qr_decompose(a)[0]


def orthonormal_basis(a, rank_tol=RANK_TOL):
    """Orthonormal basis of ``span(a)`` with numerical rank detection.

    The result may have fewer columns than ``a`` (zero for the zero matrix).
    """
    a = as_matrix(a)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0.0:
        return u[:, :0]
    r = int(np.count_nonzero(s > rank_tol * s[0]))
    return u[:, :r]


def complete_basis(q, total):
    """Extend orthonormal columns ``q`` (m x r) to ``total`` columns.

    New columns come from Gram-Schmidt on the coordinate axes, so the
    completion is deterministic.
    """
    m = q.shape[0]
    cols = [q[:, j] for j in range(q.shape[1])]
    for i in range(m):
        if len(cols) == total:
            break
        e = np.zeros(m)
        e[i] = 1.0
        for _ in range(2):
            for c in cols:
                e -= (c @ e) * c
        nrm = np.linalg.norm(e)
        if nrm > 1e-8:
            cols.append(e / nrm)
    return np.column_stack(cols) if cols else np.zeros((m, 0))


def _zero_svd(m, n, k):
    empty_m, empty_n = np.zeros((m, 0)), np.zeros((n, 0))
    return SvdResult(complete_basis(empty_m, k), np.zeros(k), complete_basis(empty_n, k))


def svd_topk(a, k, max_iter=SVD_MAX_ITER, tol=SVD_TOL):
    """Top-``k`` singular triplets by block subspace iteration.

    Each sweep re-orthonormalizes both sides by QR and extracts Ritz values
    from the small projected matrix. Iteration stops once successive sigma
    estimates move less than ``tol`` (relative to sigma_1) and the triplet
    residuals are below ``SVD_RESIDUAL_TOL * sigma_1``.
    """
    a = as_matrix(a)
    m, n = a.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k={k} must lie in [1, {min(m, n)}]")
    if not np.any(a):
        return _zero_svd(m, n, k)

    p = min(min(m, n), k + SVD_OVERSAMPLE)
    # Fixed start block keeps the routine deterministic.
    rng = np.random.Generator(np.random.Philox(0))
    qv, _ = np.linalg.qr(rng.standard_normal((n, p)))
    prev = None
    for _ in range(max_iter):
        qu, _ = np.linalg.qr(a @ qv)
        qv, _ = np.linalg.qr(a.T @ qu)
        ub, s, vbt = np.linalg.svd(qu.T @ a @ qv)
        U = qu @ ub[:, :k]
        V = qv @ vbt[:k].T
        sigma = s[:k]
        scale = sigma[0]
        if scale == 0.0:
            return _zero_svd(m, n, k)
        res = max(
            np.linalg.norm(a @ V - U * sigma, axis=0).max(),
            np.linalg.norm(a.T @ U - V * sigma, axis=0).max(),
        )
        if prev is not None and np.max(np.abs(sigma - prev)) <= tol * scale and res <= SVD_RESIDUAL_TOL * scale:
            break
        prev = sigma
    else:
        raise DidNotConverge(f"subspace iteration did not converge in {max_iter} sweeps")

    sigma = sigma.copy()
    live = sigma >= ZERO_SIGMA_TOL * max(m, n) * scale
    r = int(np.count_nonzero(live))
    if r < k:
        sigma[r:] = 0.0
        U = complete_basis(U[:, :r], k)
        V = complete_basis(V[:, :r], k)
    return SvdResult(U, sigma, V)


def jacobi_svd(a, max_sweeps=100):
    """Full SVD by one-sided (Hestenes) Jacobi rotations.

    Slow but simple; intended for matrices up to about 64 x 64 as an
    independent reference for :func:`svd_topk`.
    """
    a = as_matrix(a)
    transpose = a.shape[0] < a.shape[1]
    g = (a.T if transpose else a).copy()
    m, n = g.shape
    v = np.eye(n)
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = g[:, p] @ g[:, p]
                beta = g[:, q] @ g[:, q]
                gamma = g[:, p] @ g[:, q]
                if abs(gamma) <= eps * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                gp, gq = g[:, p].copy(), g[:, q].copy()
                g[:, p], g[:, q] = c * gp - s * gq, s * gp + c * gq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    else:
        raise DidNotConverge(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sigma = np.linalg.norm(g, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, g, v = sigma[order], g[:, order], v[:, order]
    cutoff = ZERO_SIGMA_TOL * max(m, n) * sigma[0] if sigma[0] > 0 else 0.0
    r = int(np.count_nonzero(sigma > cutoff))
    u = complete_basis(g[:, :r] / sigma[:r], n)
    sigma[r:] = 0.0
    if transpose:
        return SvdResult(v, sigma, u)
    return SvdResult(u, sigma, v)


def spectral_norm(a):
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(np.atleast_2d(a), 2))


def lstsq(design, rhs, ridge=0.0, rank_tol=RANK_TOL):
    """Least squares via QR, falling back to the minimum-norm solution.

    Returns ``(x, deficient)`` where ``deficient`` reports whether the
    design failed the column-rank test (only possible when ``ridge == 0``).
    """
    design = np.asarray(design, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64).ravel()
    if design.ndim != 2 or design.shape[0] != rhs.shape[0]:
        raise ShapeMismatch(f"design {design.shape} incompatible with rhs of length {rhs.shape[0]}")
    q = design.shape[1]
    if ridge > 0:
        design = np.vstack([design, np.sqrt(ridge) * np.eye(q)])
        rhs = np.concatenate([rhs, np.zeros(q)])
    try:
        Q, R = qr_decompose(design, rank_tol=rank_tol)
    except RankDeficient:
        x = np.linalg.lstsq(design, rhs, rcond=None)[0]
        return x, True
    return solve_triangular(R, Q.T @ rhs), False


def solve_least_squares(design, rhs):
    """Minimizer of ``||design @ x - rhs||_2`` (minimum-norm when not unique)."""
    return lstsq(design, rhs)[0]


def subspace_distance(u_hat, w_hat):
    """Principal-angle distance between the column spans of two matrices.

    Both inputs are orthonormalized internally with rank detection. The
    result is 1 when the spans have different dimensions.
    """
    u_hat, w_hat = as_matrix(u_hat), as_matrix(w_hat)
    if u_hat.shape[0] != w_hat.shape[0]:
        raise ShapeMismatch(f"row counts differ: {u_hat.shape[0]} vs {w_hat.shape[0]}")
    U = orthonormal_basis(u_hat)
    W = orthonormal_basis(w_hat)
    if U.shape[1] == 0 or W.shape[1] == 0:
        raise ZeroMatrix("cannot measure distance to the span of a zero matrix")
    if U.shape[1] != W.shape[1]:
        return 1.0
    # ||U_perp^T W|| == ||(I - U U^T) W||; this form avoids the cancellation
    # in sqrt(1 - sigma_min^2) for nearly equal spans.
    return min(1.0, spectral_norm(W - U @ (U.T @ W)))
