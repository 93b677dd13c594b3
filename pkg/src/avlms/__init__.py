"""Averaged constant-step-size LMS: analysis, simulation, and sampling tools."""

from .asymptotics import (
    CovarianceModel,
    CovarianceReport,
    bias_leading_term,
    bias_remainder_bound,
    covariance_report,
    exact_bias_covariance,
    exact_variance_covariance,
    excess_risk,
    small_gamma_equivalents,
    total_error_envelope,
    variance_leading_terms,
    variance_remainder_bound,
)
from .engine import (
    RunConfig,
    Trajectory,
    class_weighted_spec,
    importance_sampled_stream,
    isgd_run,
    lms_step,
    nlms_run,
    run_averaged_lms,
)
from .errors import (
    DataFormatError,
    DimensionError,
    SchemeError,
    SingularOperatorError,
    SpecError,
)
from .moments import (
    CrossTermReport,
    DiscreteDesign,
    GaussianDesign,
    IndependentGaussianNoise,
    MomentSet,
    ProblemSpec,
    ResidualNoise,
    check_cross_term_condition,
    compute_moments,
    gaussian_fourth_moment,
    reweighted_moments,
)
from .operators import (
    MAX_DIM,
    SymBasis,
    SymOperator,
    apply,
    fourth_moment_operator_from_samples,
    identity_operator,
    left_right_operator,
    operator_norm,
    smallest_eigenvalue,
    solve,
    sym_to_vec,
    vec_to_sym,
)
from .sampling import (
    SamplingScheme,
    bias_gain,
    optimal_bias_scheme,
    optimal_variance_scheme,
    resampled_gamma_max,
    uniform_scheme,
    variance_gain,
)
from .stepsize import (
    ContractionFactors,
    StepSizeReport,
    contraction_factors,
    contraction_generator,
    contraction_rate_bound,
    gamma_max,
    gamma_max_det,
    smallest_t_eigenvalue,
    step_size_report,
    trace_step_bound,
)

__version__ = "0.1.0"
