"""
Speed and accuracy against the exact SVD
========================================

``bench`` times the exact oracle and a Monte-Carlo run that stops as soon as
its error is within a target ratio of the optimum. Timings depend on the
machine; the error ratio does not.
"""

import numpy as np

from mcrank import Config, Sampler, bench
from mcrank.engine import MAX_SUBSPACE

rng = np.random.default_rng(2000)

# Tall matrix with a decaying spectrum plus noise, the typical data case.
m, n, r = 2000, 100, 100
U = np.linalg.qr(rng.standard_normal((m, r)))[0]
V = np.linalg.qr(rng.standard_normal((n, r)))[0]
A = (U * np.logspace(2, 0, r)) @ V.T

for k, target in [(10, 2.0), (10, 1.1), (25, 1.1)]:
    cfg = Config(k=k, l=k, max_iterations=20, epsilon=1e-9)
    rep = bench(A, cfg, Sampler("uniform-wor", 1), target_ratio=target, label=f"{m}x{n}")
    print(rep.table())
    print()

print("largest k + l allowed per update:", MAX_SUBSPACE)
