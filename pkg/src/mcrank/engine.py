"""
Iterative Monte-Carlo rank-k approximation.

The approximant is kept in factored form ``B = X @ Y.T`` where ``X`` has
orthonormal columns and ``Y = A.T @ X``. Each update reads a handful of new
columns of ``A``, extends ``X`` by modified Gram-Schmidt, and keeps the best
rank-k approximation whose columns lie in the extended span. ``||B||_F`` never
decreases from one iteration to the next.

Row sampling is column sampling on ``A.T``; a state built that way carries
``orientation="rows"`` and its ``X`` lives in the column space of ``A.T``.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import (
    _sequential_sum,
    as_matrix,
    eigh_descending,
    frobenius_norm_sq,
    gram_of_columns,
    jacobi_svd,
    mgs_extend,
    transpose_times_basis,
)
from .sampling import Sampler, SamplerKind

__all__ = [
    "Config",
    "ApproxState",
    "IterationRecord",
    "ConvergenceTrace",
    "TripletEstimates",
    "NumericalError",
    "init_state",
    "update_step",
    "run",
    "residual_norm_sq",
    "triplet_estimates",
    "reconstruct_entry",
    "reconstruct",
    "MAX_SUBSPACE",
]

#: Upper bound on ``k + l``; the small eigenproblem is dense and cubic in it.
MAX_SUBSPACE = 512

STRATEGIES = ("gram_eig", "small_svd")
ORIENTATIONS = ("columns", "rows", "auto")

LAMBDA_RTOL = 1e-8
# eigenvalues below this fraction of the largest are compared absolutely
LAMBDA_FLOOR = 1e-4
MONOTONE_SLACK = 1e-8
DEGENERATE_LAMBDA = 1e-24
ZERO_NORM = 1e-15


class NumericalError(ArithmeticError):
    """An internal consistency check failed."""


@dataclass(frozen=True)
class Config:
    """Run parameters.

    ``l`` defaults to ``k``. ``orientation="auto"`` samples rows when the
    matrix is wider than tall.
    """

    k: int
    l: Optional[int] = None
    max_iterations: int = 20
    epsilon: float = 1e-3
    seed: int = 0
    orientation: str = "columns"
    strategy: str = "gram_eig"
    drop_tol: float = 1e-12
    workers: int = 1

    def __post_init__(self):
        if self.l is None:
            object.__setattr__(self, "l", self.k)
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if int(self.l) != self.l or self.l < 1:
            raise ValueError(f"l must be a positive integer, got {self.l!r}")
        if self.k + self.l > MAX_SUBSPACE:
            raise ValueError(f"k + l = {self.k + self.l} exceeds the cap {MAX_SUBSPACE}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be positive, got {self.max_iterations!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")

    def resolve_orientation(self, shape) -> str:
        if self.orientation != "auto":
            return self.orientation
        m, n = shape
        return "rows" if m < n else "columns"


@dataclass(frozen=True, eq=False)
class ApproxState:
    """Factored approximant ``B = X @ Y.T`` of the (oriented) matrix.

    ``lambdas[i]`` is ``||Y[:, i]||**2`` up to rounding, in non-increasing order.
    """

    X: np.ndarray
    Y: np.ndarray
    lambdas: np.ndarray
    iteration: int = 0
    columns_seen: frozenset = frozenset()
    orientation: str = "columns"

    @property
    def rank(self) -> int:
        return self.X.shape[1]

    @property
    def norm_sq(self) -> float:
        return _sequential_sum(self.lambdas)

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of the original matrix being approximated."""
        if self.orientation == "rows":
            return self.Y.shape[0], self.X.shape[0]
        return self.X.shape[0], self.Y.shape[0]

    def same_factors(self, other: "ApproxState") -> bool:
        return (
            self.orientation == other.orientation
            and self.iteration == other.iteration
            and _bits_equal(self.X, other.X)
            and _bits_equal(self.Y, other.Y)
            and _bits_equal(self.lambdas, other.lambdas)
        )


def _bits_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass
class IterationRecord:
    t: int
    norm_b_sq: float
    residual_sq: float
    relative_error: float
    improvement_ratio: float
    ratio_to_initial: float
    basis_size: int
    samples_total: int
    indices: tuple = ()
    wall_time: float = 0.0
    flops: dict = field(default_factory=dict)


@dataclass
class ConvergenceTrace:
    config: dict
    a_norm_sq: float
    records: list = field(default_factory=list)
    optimum_relative_error: Optional[float] = None
    stop_iteration: Optional[int] = None
    stop_reason: Optional[str] = None

    def relative_errors(self) -> list:
        return [r.relative_error for r in self.records]


@dataclass
class TripletEstimates:
    sigma: np.ndarray
    u: np.ndarray
    v: np.ndarray
    degenerate: np.ndarray


def _check_indices(indices, n: int) -> list[int]:
    out = []
    for i in indices:
        if int(i) != i or not 0 <= i < n:
            raise IndexError(f"column index {i!r} out of range for {n} columns")
        out.append(int(i))
    return out


def _check_lambdas(lam: np.ndarray, Y: np.ndarray):
    if lam.size == 0:
        return
    ysq = np.einsum("ij,ij->j", Y, Y)
    floor = LAMBDA_FLOOR * max(float(lam[0]), float(ysq.max()))
    scale = np.maximum(np.maximum(np.abs(lam), ysq), floor)
    err = np.abs(lam - ysq)
    if np.any(err > LAMBDA_RTOL * scale):
        i = int(np.argmax(err / np.where(scale > 0, scale, 1.0)))
        raise NumericalError(
            f"eigenvalue {lam[i]!r} disagrees with ||A^T x_{i}||^2 = {ysq[i]!r}"
        )


def _update_core(A, Xp, Yp, k, strategy, workers):
    p = Xp.shape[1]
    kk = min(k, p)
    if strategy == "gram_eig":
        eig = eigh_descending(gram_of_columns(Yp))
        O, lam = eig.vectors[:, :kk], eig.values[:kk]
    else:
        sigma, V = jacobi_svd(Yp)
        O, lam = V[:, :kk], sigma[:kk] ** 2
    lam = np.maximum(lam, 0.0)
    X = Xp @ O
    Y = transpose_times_basis(A, X, workers=workers)
    _check_lambdas(lam, Y)
    return X, Y, lam


def _flops(m, n, k_old, cands, p, k_new, l_new):
    return {
        "mgs": m * (k_old + cands) ** 2,
        "product": (l_new + k_new) * m * n,
        "gram": n * p * p,
        "eigen": p**3,
        "rotate": k_new * p * m,
    }


def _draw_refill(refill, n, seen, need):
    """Yield unseen column indices: first from the sampler, then in order."""
    if refill is not None:
        budget = 4 * n + 16
        while budget > 0 and len(seen) < n:
            batch = refill.next_indices(max(need, 1), n)
            if not batch:
                break
            budget -= len(batch)
            for j in batch:
                if j not in seen:
                    yield j
    for j in range(n):
        if j not in seen:
            yield j


def init_state(A, cfg: Config, init_indices: Sequence[int], refill: Optional[Sampler] = None,
               orientation: str = "columns", _stats: Optional[dict] = None) -> ApproxState:
    """Initial approximant from ``cfg.k`` columns of `A`.

    The chosen columns are orthonormalized; if they span fewer than ``k``
    directions, unseen columns are pulled (from `refill` if given, else in
    index order) until ``k`` directions exist or every column has been read.
    The basis is then rotated onto the top eigenvectors of its Gram matrix so
    that ``lambdas`` are meaningful from the start.
    """
    A = as_matrix(A)
    m, n = A.shape
    if m == 0 or n == 0:
        raise ValueError("cannot approximate an empty matrix")
    k = cfg.k
    if k > min(m, n):
        raise ValueError(f"k = {k} exceeds min(m, n) = {min(m, n)}")
    idx = _check_indices(init_indices, n)
    if len(set(idx)) != len(idx):
        raise ValueError("initial column indices must be distinct")

    X = mgs_extend(np.zeros((m, 0)), A[:, idx], cfg.drop_tol)
    seen = set(idx)
    used = list(idx)
    if X.shape[1] < k and len(seen) < n:
        for j in _draw_refill(refill, n, seen, k - X.shape[1]):
            if j in seen:
                continue
            seen.add(j)
            used.append(j)
            X = mgs_extend(X, A[:, [j]], cfg.drop_tol)
            if X.shape[1] == k or len(seen) == n:
                break

    q = X.shape[1]
    Y = transpose_times_basis(A, X, workers=cfg.workers)
    lam = np.zeros(0)
    if q:
        X, Y, lam = _update_core(A, X, Y, k, cfg.strategy, cfg.workers)
    if _stats is not None:
        _stats["indices"] = tuple(used)
        _stats["basis_size"] = q
        _stats["flops"] = _flops(m, n, 0, len(used), q, q, 0)
    return ApproxState(X, Y, lam, 0, frozenset(seen), orientation)


def update_step(A, state: ApproxState, new_indices: Sequence[int], cfg: Config,
                a_norm_sq: Optional[float] = None, _stats: Optional[dict] = None) -> ApproxState:
    """One improvement pass using the columns `new_indices` of `A`.

    If none of the new columns adds a direction, the returned state has the
    same factors and only ``iteration`` / ``columns_seen`` advance.
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    if state.X.shape[0] != m or state.Y.shape[0] != n:
        raise ValueError(
            f"state factors {state.X.shape}/{state.Y.shape} do not fit a {m}x{n} matrix"
        )
    idx = _check_indices(new_indices, n)
    q = state.rank
    seen = state.columns_seen | frozenset(idx)
    Xp = mgs_extend(state.X, A[:, idx], cfg.drop_tol)
    p = Xp.shape[1]
    if _stats is not None:
        _stats["basis_size"] = p
    if p == q:
        if _stats is not None:
            _stats["flops"] = _flops(m, n, q, len(idx), 0, 0, 0)
        return dataclasses.replace(state, iteration=state.iteration + 1, columns_seen=seen)

    Ynew = transpose_times_basis(A, Xp[:, q:], workers=cfg.workers)
    Yp = np.hstack([state.Y, Ynew])
    X, Y, lam = _update_core(A, Xp, Yp, cfg.k, cfg.strategy, cfg.workers)
    if _stats is not None:
        _stats["flops"] = _flops(m, n, q, len(idx), p, X.shape[1], p - q)

    if a_norm_sq is None:
        a_norm_sq = frobenius_norm_sq(A)
    old, new = state.norm_sq, _sequential_sum(lam)
    if new < old - MONOTONE_SLACK * a_norm_sq:
        raise NumericalError(f"update decreased ||B||_F^2 from {old!r} to {new!r}")
    return ApproxState(X, Y, lam, state.iteration + 1, seen, state.orientation)


def residual_norm_sq(a_norm_sq: float, state: ApproxState) -> float:
    """``||A - B||_F^2`` from the norms alone, clamped at zero."""
    return max(a_norm_sq - state.norm_sq, 0.0)


def _ratio(num_sq: float, den_sq: float, floor_sq: float) -> float:
    if den_sq <= floor_sq and num_sq <= floor_sq:
        return 1.0
    return math.sqrt(num_sq) / math.sqrt(den_sq)


def _record(t, state, a_norm_sq, prev_sq, init_sq, samples_total, stats, wall):
    floor_sq = (ZERO_NORM**2) * a_norm_sq
    norm_sq = state.norm_sq
    res = residual_norm_sq(a_norm_sq, state)
    return IterationRecord(
        t=t,
        norm_b_sq=norm_sq,
        residual_sq=res,
        relative_error=res / a_norm_sq if a_norm_sq > 0 else 0.0,
        improvement_ratio=_ratio(prev_sq, norm_sq, floor_sq),
        ratio_to_initial=_ratio(init_sq, norm_sq, floor_sq),
        basis_size=stats.get("basis_size", state.rank),
        samples_total=samples_total,
        indices=tuple(stats.get("indices", ())),
        wall_time=wall,
        flops=stats.get("flops", {}),
    )


def run(A, cfg: Config, sampler: Optional[Sampler] = None, *,
        optimum_relative_error: Optional[float] = None,
        stop_when: Optional[Callable[[IterationRecord], bool]] = None,
        on_record: Optional[Callable[[IterationRecord], None]] = None):
    """Initialize, then update until the norm stops growing or the cap is hit.

    Iteration ``t`` stops the run when ``||B_{t-1}|| / ||B_t|| > 1 - epsilon``
    (an iteration that adds nothing has ratio 1), when ``stop_when(record)`` is
    true, or after ``cfg.max_iterations`` updates. The sampler defaults to
    uniform without replacement seeded with ``cfg.seed``.

    Returns
    -------
    (ApproxState, ConvergenceTrace)
    """
    A = as_matrix(A)
    orientation = cfg.resolve_orientation(A.shape)
    M = np.ascontiguousarray(A.T) if orientation == "rows" else A
    m, n = M.shape
    if m == 0 or n == 0:
        raise ValueError("cannot approximate an empty matrix")
    if cfg.k > min(m, n):
        raise ValueError(f"k = {cfg.k} exceeds min(m, n) = {min(m, n)}")
    if sampler is None:
        sampler = Sampler(SamplerKind.WITHOUT_REPLACEMENT, cfg.seed)

    a_norm_sq = frobenius_norm_sq(M)
    trace = ConvergenceTrace(
        config={
            "k": cfg.k,
            "l": cfg.l,
            "max_iterations": cfg.max_iterations,
            "epsilon": cfg.epsilon,
            "seed": cfg.seed,
            "sampler": sampler.kind.value,
            "sampler_seed": sampler.seed,
            "strategy": cfg.strategy,
            "orientation": orientation,
            "m": A.shape[0],
            "n": A.shape[1],
        },
        a_norm_sq=a_norm_sq,
        optimum_relative_error=optimum_relative_error,
    )

    def emit(rec):
        trace.records.append(rec)
        if on_record is not None:
            on_record(rec)

    start = time.perf_counter()
    first = list(dict.fromkeys(sampler.next_indices(cfg.k, n)))
    stats: dict = {}
    state = init_state(M, cfg, first, refill=sampler, orientation=orientation, _stats=stats)
    samples_total = len(stats["indices"])
    init_sq = prev_sq = state.norm_sq
    emit(_record(0, state, a_norm_sq, 0.0, init_sq, samples_total, stats,
                 time.perf_counter() - start))
    trace.stop_iteration, trace.stop_reason = 0, "max_iterations"
    if stop_when is not None and stop_when(trace.records[0]):
        trace.stop_reason = "target"
        return state, trace

    for t in range(1, cfg.max_iterations + 1):
        tick = time.perf_counter()
        idx = sampler.next_indices(cfg.l, n)
        stats = {"indices": tuple(idx)}
        state = update_step(M, state, idx, cfg, a_norm_sq, _stats=stats)
        samples_total += len(idx)
        rec = _record(t, state, a_norm_sq, prev_sq, init_sq, samples_total, stats,
                      time.perf_counter() - tick)
        emit(rec)
        prev_sq = state.norm_sq
        trace.stop_iteration = t
        if rec.improvement_ratio > 1.0 - cfg.epsilon:
            trace.stop_reason = "epsilon"
            break
        if stop_when is not None and stop_when(rec):
            trace.stop_reason = "target"
            break
    return state, trace


def triplet_estimates(state: ApproxState) -> TripletEstimates:
    """Approximate leading singular triplets of the original matrix.

    ``sigma_i = sqrt(lambda_i)``; the sampled-side vectors are the columns of
    ``X`` and the other side is ``Y`` with unit-normalized columns. Columns with
    ``lambda_i < 1e-24`` get a zero vector and ``degenerate[i] = True``.
    """
    lam = state.lambdas
    sigma = np.sqrt(lam)
    norms = np.sqrt(np.einsum("ij,ij->j", state.Y, state.Y))
    degenerate = lam < DEGENERATE_LAMBDA
    if lam.size:
        floor = math.sqrt(LAMBDA_FLOOR) * max(float(sigma[0]), float(norms.max()))
        scale = np.maximum(np.maximum(sigma, norms), floor)
        bad = (np.abs(norms - sigma) > LAMBDA_RTOL * scale) & ~degenerate
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NumericalError(f"||y_{i}|| = {norms[i]!r} but sqrt(lambda_{i}) = {sigma[i]!r}")
    other = np.zeros_like(state.Y)
    ok = ~degenerate
    other[:, ok] = state.Y[:, ok] / norms[ok]
    if state.orientation == "rows":
        return TripletEstimates(sigma, other, state.X.copy(), degenerate)
    return TripletEstimates(sigma, state.X.copy(), other, degenerate)


def reconstruct_entry(state: ApproxState, i: int, j: int) -> float:
    """Entry ``(i, j)`` of the approximant, from the stored factors only."""
    m, n = state.shape
    if not (0 <= i < m and 0 <= j < n):
        raise IndexError(f"entry ({i}, {j}) outside a {m}x{n} matrix")
    if state.orientation == "rows":
        i, j = j, i
    s = 0.0
    for q in range(state.rank):
        s += float(state.X[i, q]) * float(state.Y[j, q])
    return s


def reconstruct(state: ApproxState) -> np.ndarray:
    """Dense approximant, accumulated term by term in the same order as
    :func:`reconstruct_entry`."""
    B = np.zeros((state.X.shape[0], state.Y.shape[0]))
    for q in range(state.rank):
        B += np.multiply.outer(state.X[:, q], state.Y[:, q])
    return B.T.copy() if state.orientation == "rows" else B
