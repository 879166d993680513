"""Image fusion by low-rank triple factorization with an L-BFGS solver.

The package fuses a spatially coarse, spectrally fine observation with a
spatially fine, spectrally coarse one into a single high-resolution tensor
by fitting three coupled low-rank factors to both observations at once.
"""

from .tensor import (
    ALL_UNFOLD_SPECS,
    UnfoldSpec,
    fold,
    frobenius_norm,
    kron,
    mode_k_product,
    unfold,
    vectorize,
)
from .triple import (
    TripleFactors,
    factor_to_matrix,
    matrix_to_factor,
    random_factors,
    reconstruct_elementwise,
    reconstruct_matricized,
)
from .degradation import (
    SpatialOperator,
    SpectralOperator,
    add_white_gaussian_noise,
    build_spatial,
    build_spatial_operator,
    build_spectral,
    degrade_spatial,
    degrade_spectral,
)
from .objective import (
    FactorGradient,
    FusionProblem,
    GradientCheckResult,
    HelperMats,
    finite_difference_gradient,
    gradient,
    gradient_check,
    gradient_vectorized,
    helper_mats,
    objective_and_gradient,
    objective_value,
)
from .solver import (
    IterationRecord,
    IterationTrace,
    LbfgsHistory,
    LineSearchError,
    NumericalBreakdownError,
    SolverConfig,
    armijo_backtrack,
    bb_scaling,
    flatten_factors,
    flatten_gradient,
    solve,
    two_loop_direction,
    unflatten_factors,
)
from .metrics import QualityReport, cc, ergas, evaluate, r_snr, sam
from .synth import (
    ExperimentSpec,
    default_experiment_spec,
    generate_ground_truth,
    load_experiment_spec,
    rank_sweep,
    run_experiment,
    save_experiment_spec,
)

__version__ = "0.1.0"
