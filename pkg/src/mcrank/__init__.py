"""Iterative Monte-Carlo rank-k matrix approximation with an exact SVD oracle."""

from .bench import BenchReport, bench, optimum_relative_error, re_ratio
from .engine import (
    ApproxState,
    Config,
    ConvergenceTrace,
    IterationRecord,
    NumericalError,
    TripletEstimates,
    init_state,
    reconstruct,
    reconstruct_entry,
    residual_norm_sq,
    run,
    triplet_estimates,
    update_step,
)
from .linalg import (
    ConvergenceError,
    DimensionError,
    EigenResult,
    OracleTooLarge,
    SvdResult,
    eigh_descending,
    frobenius_norm_sq,
    gram_of_columns,
    jacobi_svd,
    mgs_extend,
    svd_oracle,
    transpose_times_basis,
)
from .sampling import Sampler, SamplerKind, weights_from_gradient_image, weights_from_row_norms

__version__ = "0.1.0"
