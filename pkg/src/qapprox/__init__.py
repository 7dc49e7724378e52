"""Quasioptimal alternating projections for constrained low-rank approximation.

Low-rank projectors (truncated SVD, randomized SVD, maxvol cross
approximation), tensor-train decomposition, alternating projection schemes
for nonnegative low-rank approximation, max-norm approximation by binary
search, Riemannian matrix completion with nonnegativity regularization,
and closed-form model sets for verifying the convergence theory.
"""

from .completion import (
    CompletionProblem,
    ManifoldPoint,
    StagnationError,
    TangentVector,
    complete,
    factored_distance,
    factored_norm,
    line_search_step,
    point_from_factored,
    retract,
    sample_problem,
    sparse_residual,
    tangent_project,
)
from .cross import (
    CountingOracle,
    CrossError,
    CrossState,
    EntryOracle,
    cross_project_pvol,
    cross_project_vol,
    dense_oracle,
    dominant_r,
    estimate_min_entry,
    factored_oracle,
    maxvol,
    maxvol_rect,
)
from .datagen import (
    gen_gaussian_mixture,
    gen_quantized_matrix,
    gen_quantized_tt,
    gen_smoluchowski,
    i0_scaled,
    mixture_parameters,
    round_half_away,
)
from .experiments import (
    EXPERIMENT_NAMES,
    ExperimentResult,
    ExperimentSpec,
    TrialStatus,
    UsageError,
    nearest_rank_percentile,
    run_experiment,
    summarize_experiment,
    summary_stats,
)
from .geometry import (
    LinePair,
    QUASI_PROJECTION_MODES,
    QuasiProjSpec,
    VerificationReport,
    half_open_segment_demo,
    kappa_factors,
    quasi_project_line,
    run_two_line_qap,
    spiral_projection_demo,
    spiral_vertices,
    verify_pythagorean,
    verify_theorem_rates,
)
from .linalg import (
    RngStream,
    SvdError,
    SvdResult,
    gaussian_matrix,
    haar_columns,
    haar_orthogonal,
    load_matrix,
    load_matrix_csv,
    pseudoinverse,
    qr_orthonormal,
    save_matrix,
    save_matrix_csv,
    svd,
)
from .maxnorm import (
    RadiusInterval,
    ball_project,
    initial_iterate,
    inner_ap,
    maxnorm_approximate,
    maxnorm_approximate_tt,
    udell_rank,
)
from .projectors import (
    FactoredMatrix,
    RsvdConfig,
    frobenius_error,
    load_factored,
    negative_part_norms,
    rsvd_truncate,
    save_factored,
    svd_truncate,
)
from .schemes import (
    IterationTrace,
    SchemeConfig,
    SchemeError,
    TraceRow,
    compute_alpha,
    constraint_step,
    run_scheme,
    run_scheme_tt,
)
from .tt import (
    QttVector,
    TTTensor,
    load_tt,
    save_tt,
    tt_apply_entrywise,
    tt_entry,
    tt_interface,
    tt_materialize,
    tt_unfolding_oracle,
    ttsvd,
)

__version__ = "0.1.0"
