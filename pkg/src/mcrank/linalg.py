"""
Dense kernels used by the low-rank engine.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. An orthonormal basis is an ``(m, p)`` array whose columns are the basis
vectors; ``p`` may be zero.

Several kernels accumulate sums in a fixed sequential order instead of calling
BLAS. This makes their results independent of the BLAS build and thread count,
so that runs are reproducible bit for bit and can be checked against naive
loop implementations exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "ConvergenceError",
    "DimensionError",
    "OracleTooLarge",
    "EigenResult",
    "SvdResult",
    "as_matrix",
    "frobenius_norm_sq",
    "gram_check",
    "mgs_extend",
    "eigh_descending",
    "jacobi_svd",
    "gram_of_columns",
    "transpose_times_basis",
    "svd_oracle",
    "ORACLE_MAX_DIM",
]

#: Largest ``min(m, n)`` the exact oracle accepts by default.
ORACLE_MAX_DIM = 600


class DimensionError(ValueError):
    """Operand shapes do not agree."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ConvergenceError(ArithmeticError):
    """A Jacobi iteration hit its sweep cap."""

    def __init__(self, message: str, off_norm: float):
        super().__init__(message)
        self.off_norm = off_norm


class OracleTooLarge(ValueError):
    """The matrix is too large for the dense exact SVD."""


class EigenResult(NamedTuple):
    values: np.ndarray  # (p,), non-increasing
    vectors: np.ndarray  # (p, p), column i pairs with values[i]


class SvdResult(NamedTuple):
    singular_values: np.ndarray  # (r,)
    left_vectors: np.ndarray  # (m, r)
    right_vectors: np.ndarray  # (n, r)

    @property
    def rank(self) -> int:
        return len(self.singular_values)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return `a` as a finite, C-contiguous float64 2-D array.

    Raises ``ValueError`` if `a` is not two-dimensional or holds NaN/Inf; the
    message names the first offending entry.
    """
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"{name} has non-finite entry {arr[i, j]!r} at ({i}, {j})")
    return arr


def _sequential_row_sums(M: np.ndarray) -> np.ndarray:
    # cumsum accumulates left to right; np.sum would use pairwise blocks
    if M.shape[1] == 0:
        return np.zeros(M.shape[0])
    return np.cumsum(M, axis=1)[:, -1]


def _sequential_sum(v: np.ndarray) -> float:
    if v.size == 0:
        return 0.0
    return float(np.cumsum(v)[-1])


def frobenius_norm_sq(A) -> float:
    """Squared Frobenius norm, summed row by row in a fixed order.

    The total is the sequential sum of the per-row sums of squares, so it equals
    ``sum(weights_from_row_norms(A, "rows"))`` exactly.
    """
    A = np.asarray(A, dtype=np.float64)
    return _sequential_sum(_sequential_row_sums(A * A))


def gram_check(X: np.ndarray) -> float:
    """Max-norm of ``X.T @ X - I``; zero for an empty basis."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(X.T @ X - np.eye(X.shape[1]))))


def _as_candidates(candidates, m: int) -> list[np.ndarray]:
    if isinstance(candidates, np.ndarray) and candidates.ndim == 2:
        if candidates.shape[0] != m:
            raise DimensionError(
                f"candidate 0 has dimension {candidates.shape[0]}, basis has {m}", 0
            )
        return [candidates[:, j] for j in range(candidates.shape[1])]
    out = []
    for idx, w in enumerate(candidates):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (m,):
            raise DimensionError(
                f"candidate {idx} has shape {w.shape}, basis dimension is {m}", idx
            )
        out.append(w)
    return out


def mgs_extend(basis, candidates, drop_tol: float = 1e-12) -> np.ndarray:
    """Extend an orthonormal basis with candidate vectors by modified Gram-Schmidt.

    Parameters
    ----------
    basis : ndarray, shape (m, k)
        Orthonormal columns. They are copied unchanged into the result.
    candidates : ndarray of shape (m, l), or a sequence of length-m vectors
        Processed in order.
    drop_tol : float
        A candidate is dropped when its residual after projection is at most
        ``drop_tol`` times its original norm.

    Returns
    -------
    ndarray, shape (m, p)
        ``k <= p <= k + l``. The first ``k`` columns are `basis`.

    Notes
    -----
    A candidate that loses more than half its norm in the first projection pass
    is projected a second time against the accumulated basis.
    """
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2:
        raise DimensionError(f"basis must be 2-D, got shape {basis.shape}")
    m = basis.shape[0]
    cols = [basis[:, j] for j in range(basis.shape[1])]
    added = []
    for w in _as_candidates(candidates, m):
        norm0 = math.sqrt(float(w @ w))
        if norm0 == 0.0:
            continue
        v = w.copy()
        for q in cols:
            v -= (q @ v) * q
        for q in added:
            v -= (q @ v) * q
        nv = math.sqrt(float(v @ v))
        if nv < 0.5 * norm0:
            for q in cols:
                v -= (q @ v) * q
            for q in added:
                v -= (q @ v) * q
            nv = math.sqrt(float(v @ v))
        if nv <= drop_tol * norm0:
            continue
        added.append(v / nv)
    if not added:
        return basis.copy()
    return np.column_stack([basis] + [a[:, None] for a in added])


def _round_robin(p: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pair schedule covering every (i, j), i < j, once per sweep.

    Each round is a set of disjoint pairs, so its rotations commute and can be
    applied together.
    """
    players = list(range(p + (p % 2)))
    half = len(players) // 2
    rounds = []
    for _ in range(len(players) - 1):
        P, Q = [], []
        for a, b in zip(players[:half], reversed(players[half:])):
            if a < p and b < p:
                P.append(min(a, b))
                Q.append(max(a, b))
        if P:
            rounds.append((np.array(P), np.array(Q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _canonical_signs(V: np.ndarray, tie_tol: float = 1e-12) -> np.ndarray:
    # largest-magnitude component positive; near-ties go to the lowest index
    V = V.copy()
    for j in range(V.shape[1]):
        col = np.abs(V[:, j])
        top = col.max()
        if top == 0.0:
            continue
        i = int(np.flatnonzero(col >= top - tie_tol * top)[0])
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


def _off_norm(A: np.ndarray) -> float:
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def eigh_descending(S, tol: float = 1e-12, max_sweeps: int = 100) -> EigenResult:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi.

    Sweeps use a round-robin ordering in which each round rotates a set of
    disjoint index pairs at once. Iteration stops when the off-diagonal
    Frobenius norm is at most ``tol * ||S||_F``.

    Eigenvalues are returned in non-increasing order. Each eigenvector is
    signed so its largest-magnitude component is positive.

    Raises
    ------
    ConvergenceError
        After `max_sweeps` sweeps without meeting the tolerance.
    """
    A = np.array(S, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("symmetric matrix has non-finite entries")
    A = 0.5 * (A + A.T)
    p = A.shape[0]
    V = np.eye(p)
    scale = float(np.linalg.norm(A))
    if scale == 0.0 or p == 1:
        return EigenResult(np.diag(A).copy(), V)

    rounds = _round_robin(p)
    off = _off_norm(A)
    sweeps = 0
    while off > tol * scale:
        if sweeps == max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps; "
                f"off-diagonal norm {off:.3e} (||S||_F = {scale:.3e})",
                off,
            )
        for P, Q in rounds:
            apq = A[P, Q]
            live = apq != 0.0
            if not live.any():
                continue
            P, Q, apq = P[live], Q[live], apq[live]
            theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            colP, colQ = A[:, P].copy(), A[:, Q]
            A[:, P] = c * colP - s * colQ
            A[:, Q] = s * colP + c * colQ
            rowP, rowQ = A[P, :].copy(), A[Q, :]
            A[P, :] = c[:, None] * rowP - s[:, None] * rowQ
            A[Q, :] = s[:, None] * rowP + c[:, None] * rowQ
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vP, vQ = V[:, P].copy(), V[:, Q]
            V[:, P] = c * vP - s * vQ
            V[:, Q] = s * vP + c * vQ
        A = 0.5 * (A + A.T)
        off = _off_norm(A)
        sweeps += 1

    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return EigenResult(values[order], _canonical_signs(V[:, order]))


def jacobi_svd(C, tol: float = 1e-15, max_sweeps: int = 100):
    """One-sided (Hestenes) Jacobi SVD of a tall-or-square matrix.

    Returns ``(sigma, V)`` with `sigma` of length ``p = C.shape[1]`` in
    non-increasing order and `V` a full ``p x p`` orthogonal matrix of right
    singular vectors, including those for zero singular values. Works on `C`
    directly, so it never forms ``C.T @ C``. Columns whose norm has fallen
    below ``1e-15 * ||C||_F`` are rounding noise and are no longer rotated.
    """
    U = np.array(C, dtype=np.float64)
    if U.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got {U.shape}")
    p = U.shape[1]
    V = np.eye(p)
    if p == 0:
        return np.zeros(0), V
    rounds = _round_robin(p)
    negligible = 1e-30 * frobenius_norm_sq(U)
    sweeps = 0
    while True:
        worst = 0.0
        for P, Q in rounds:
            alpha = np.einsum("ij,ij->j", U[:, P], U[:, P])
            beta = np.einsum("ij,ij->j", U[:, Q], U[:, Q])
            gamma = np.einsum("ij,ij->j", U[:, P], U[:, Q])
            denom = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                cosine = np.where(denom > 0, np.abs(gamma) / denom, 0.0)
            live = (cosine > tol) & (alpha > negligible) & (beta > negligible)
            if not live.any():
                continue
            worst = max(worst, float(cosine[live].max()))
            P, Q = P[live], Q[live]
            alpha, beta, gamma = alpha[live], beta[live], gamma[live]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(zeta, 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            uP, uQ = U[:, P].copy(), U[:, Q]
            U[:, P] = c * uP - s * uQ
            U[:, Q] = s * uP + c * uQ
            vP, vQ = V[:, P].copy(), V[:, Q]
            V[:, P] = c * vP - s * vQ
            V[:, Q] = s * vP + c * vQ
        sweeps += 1
        if worst <= tol:
            break
        if sweeps == max_sweeps:
            raise ConvergenceError(
                f"one-sided Jacobi did not converge in {max_sweeps} sweeps; "
                f"largest column cosine {worst:.3e}",
                worst,
            )
    sigma = np.sqrt(np.einsum("ij,ij->j", U, U))
    order = np.argsort(-sigma, kind="stable")
    return sigma[order], _canonical_signs(V[:, order])


def gram_of_columns(Y) -> np.ndarray:
    """``Y.T @ Y`` accumulated one row of `Y` at a time.

    Entry ``(i, j)`` is the sequential sum ``sum_r Y[r, i] * Y[r, j]``. The
    products are commutative, so the result is exactly symmetric.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got {Y.shape}")
    p = Y.shape[1]
    S = np.zeros((p, p))
    for row in Y:
        S += np.multiply.outer(row, row)
    return S


def _tb_block(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    Y = np.zeros((A.shape[1], X.shape[1]))
    for r in range(A.shape[0]):
        Y += np.multiply.outer(A[r], X[r])
    return Y


def transpose_times_basis(A, X, workers: int = 1) -> np.ndarray:
    """``A.T @ X`` with every entry a sequential dot product over rows.

    Entry ``(j, i)`` equals ``sum_r A[r, j] * X[r, i]`` summed in increasing
    ``r``. With ``workers > 1`` the columns of `A` are split into blocks that
    are processed by a thread pool; the result is bitwise identical for any
    worker count.
    """
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != A.shape[0]:
        raise DimensionError(
            f"basis dimension {X.shape[0] if X.ndim == 2 else X.shape} "
            f"does not match {A.shape[0]} rows"
        )
    n = A.shape[1]
    if workers <= 1 or n < 2 * workers:
        return _tb_block(A, X)
    edges = np.linspace(0, n, workers + 1).astype(int)
    blocks = [(edges[i], edges[i + 1]) for i in range(workers)]
    Y = np.empty((n, X.shape[1]))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda b: _tb_block(np.ascontiguousarray(A[:, b[0]:b[1]]), X), blocks)
        for (lo, hi), part in zip(blocks, parts):
            Y[lo:hi] = part
    return Y


def svd_oracle(A, rank_tol: float = 1e-10, max_dim: int = ORACLE_MAX_DIM) -> SvdResult:
    """Exact thin SVD through the Gram matrix of the smaller side.

    The eigenvectors of ``A.T A`` (or ``A A.T``) give one side; the other
    side and the singular values come from ``u_i = A v_i / sigma_i`` with
    ``sigma_i = ||A v_i||``. Singular values at or below ``rank_tol * sigma_1``
    are dropped.

    Raises
    ------
    OracleTooLarge
        If ``min(m, n) > max_dim``.
    """
    A = as_matrix(A)
    m, n = A.shape
    if min(m, n) > max_dim:
        raise OracleTooLarge(
            f"exact SVD refused: min(m, n) = {min(m, n)} exceeds the desk-scale cap "
            f"{max_dim}; use the Monte-Carlo approximation instead"
        )
    wide = n > m
    M = A.T if wide else A
    if M.shape[1] == 0 or M.shape[0] == 0:
        return SvdResult(np.zeros(0), np.zeros((m, 0)), np.zeros((n, 0)))
    eig = eigh_descending(gram_of_columns(M))
    V = eig.vectors
    AV = M @ V
    sigma = np.sqrt(np.einsum("ij,ij->j", AV, AV))
    order = np.argsort(-sigma, kind="stable")
    sigma, V, AV = sigma[order], V[:, order], AV[:, order]
    if sigma.size == 0 or sigma[0] == 0.0:
        keep = 0
    else:
        keep = int(np.count_nonzero(sigma > rank_tol * sigma[0]))
    sigma, V, AV = sigma[:keep], V[:, :keep], AV[:, :keep]
    U = AV / sigma
    if wide:
        U, V = V, U
    return SvdResult(sigma, U, V)
