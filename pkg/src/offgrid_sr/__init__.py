"""Off-the-grid sparse super-resolution on the torus.

Solves the BLASSO through a Toeplitz-penalized semidefinite relaxation with a
low-rank FFT-based Frank-Wolfe method, extracts atoms from the moment-matrix
factor, and scores reconstructions with Jaccard and flat-norm metrics.
"""

from .extraction import (
    ExtractionResult,
    column_echelon,
    extract,
    extract_support,
    flatness_check,
    moment_factor,
    multiplication_matrices,
    recover_amplitudes,
)
from .indexset import IndexSet
from .measures import (
    DiscreteMeasure,
    fourier_coefficients,
    generate_synthetic,
    min_separation,
    observe,
    torus_distance,
)
from .metrics import flat_norm, jaccard, match_supports, support_relative_error
from .operators import (
    HilbertNorm,
    SpectralOperator,
    build_dirichlet,
    build_foveation,
    build_gaussian,
    build_subsampled,
    spectral_truncation_error,
)
from .solver import (
    LowRankState,
    Problem,
    SolverConfig,
    certificate_sup,
    corrective_bfgs,
    ffw_solve,
    gradient_apply,
    line_search,
    lmo,
    min_eigpair,
    objective_value,
    resolve_lambda,
)
from .toeplitz import ToeplitzCoeffs, diagonal_counts, materialize, project_gram, toeplitz_matvec

__version__ = "0.1.0"
