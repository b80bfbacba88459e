"""
Inside one update step
======================

Walk through a single update by hand with the matrix-core kernels, then check
that ``update_step`` produces the same approximant.
"""

import numpy as np

from mcrank import (
    Config,
    eigh_descending,
    frobenius_norm_sq,
    gram_of_columns,
    init_state,
    mgs_extend,
    residual_norm_sq,
    transpose_times_basis,
    update_step,
)

rng = np.random.default_rng(85)
A = rng.standard_normal((8, 5))
cfg = Config(k=2, l=2)
a_sq = frobenius_norm_sq(A)

# Start from columns 0 and 1. The initial basis is already rotated so that
# its lambdas are the eigenvalues of the 2 x 2 Gram matrix.
s0 = init_state(A, cfg, [0, 1])
print("lambdas after init:", s0.lambdas)

# 1. extend the basis with two new columns by modified Gram-Schmidt
Xp = mgs_extend(s0.X, A[:, [2, 3]])
print("basis size p =", Xp.shape[1])

# 2. Y = A^T X and its Gram matrix S = Y^T Y
Y = transpose_times_basis(A, Xp)
S = gram_of_columns(Y)

# 3. the top-k eigenvectors of S rotate the basis onto the best k directions
eig = eigh_descending(S)
X_new = Xp @ eig.vectors[:, : cfg.k]
print("top-k eigenvalues of S:", eig.values[: cfg.k])

# The library step does the same thing.
s1 = update_step(A, s0, [2, 3], cfg)
print("lambdas after update_step:", s1.lambdas)
print("same subspace:", np.allclose(X_new @ X_new.T, s1.X @ s1.X.T))

# lambda_i equals ||A^T x_i||^2 and the squared norm of B never shrinks.
print("||A^T x_i||^2:", ((A.T @ s1.X) ** 2).sum(axis=0))
print(f"residual ||A - B||^2: {residual_norm_sq(a_sq, s0):.6f} -> {residual_norm_sq(a_sq, s1):.6f}")
