"""Comparison of Monte-Carlo runs against the exact optimum."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .engine import Config, run
from .linalg import SvdResult, as_matrix, frobenius_norm_sq, svd_oracle
from .sampling import Sampler

__all__ = ["optimum_relative_error", "re_ratio", "BenchReport", "bench", "ZERO_ERROR"]

#: Relative errors at or below this are treated as exact zero when forming ratios.
ZERO_ERROR = 1e-12


def optimum_relative_error(A, k: int, svd: Optional[SvdResult] = None) -> float:
    """``sum_{q > k} sigma_q**2 / ||A||_F**2``, the best achievable relative error."""
    A = as_matrix(A)
    a_sq = frobenius_norm_sq(A)
    if a_sq == 0.0:
        return 0.0
    if svd is None:
        svd = svd_oracle(A)
    tail = svd.singular_values[k:]
    return float(np.sum(tail * tail)) / a_sq


def re_ratio(achieved: float, optimum: float) -> float:
    """achieved / optimum, with both-zero read as 1 and zero optimum alone as inf."""
    if optimum <= ZERO_ERROR:
        return 1.0 if achieved <= ZERO_ERROR else float("inf")
    return achieved / optimum


@dataclass
class BenchReport:
    label: str
    m: int
    n: int
    k: int
    l: int
    time_mc: float
    time_oracle: float
    speedup: float
    relative_error: float
    optimum_relative_error: float
    re_ratio: float
    target_ratio: float
    reached: bool
    iterations: int
    samples_read: int

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [
            ("dataset", self.label),
            ("size", f"{self.m} x {self.n}"),
            ("k / l", f"{self.k} / {self.l}"),
            ("oracle time [s]", f"{self.time_oracle:.4f}"),
            ("Monte-Carlo time [s]", f"{self.time_mc:.4f}"),
            ("speed up", f"{self.speedup:.3f}"),
            ("relative error", f"{self.relative_error:.6g}"),
            ("optimum relative error", f"{self.optimum_relative_error:.6g}"),
            ("Re. ratio", f"{self.re_ratio:.4f}"),
            ("target reached", f"{self.reached} (target {self.target_ratio})"),
            ("iterations", str(self.iterations)),
            ("columns/rows read", str(self.samples_read)),
        ]
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{w}}  {b}" for a, b in rows)


def bench(A, cfg: Config, sampler: Optional[Sampler] = None, target_ratio: float = 2.0,
          label: str = "matrix") -> BenchReport:
    """Time the exact oracle, then a Monte-Carlo run that stops as soon as its
    relative error is within `target_ratio` of the optimum."""
    A = as_matrix(A)
    t0 = time.perf_counter()
    svd = svd_oracle(A)
    time_oracle = time.perf_counter() - t0
    opt = optimum_relative_error(A, cfg.k, svd)

    def hit(rec):
        return re_ratio(rec.relative_error, opt) <= target_ratio

    t0 = time.perf_counter()
    state, trace = run(A, cfg, sampler, optimum_relative_error=opt, stop_when=hit)
    time_mc = time.perf_counter() - t0
    last = trace.records[-1]
    ratio = re_ratio(last.relative_error, opt)
    return BenchReport(
        label=label,
        m=A.shape[0],
        n=A.shape[1],
        k=cfg.k,
        l=cfg.l,
        time_mc=time_mc,
        time_oracle=time_oracle,
        speedup=time_oracle / time_mc if time_mc > 0 else float("inf"),
        relative_error=last.relative_error,
        optimum_relative_error=opt,
        re_ratio=ratio,
        target_ratio=target_ratio,
        reached=ratio <= target_ratio,
        iterations=last.t,
        samples_read=last.samples_total,
    )
