"""Truncation of Gaussian state estimates by Gaussian-distributed linear inequality constraints."""
from .errors import (
    ApproximationWarning,
    DegenerateConstraint,
    DimensionMismatch,
    DomainError,
    GaussConstraintError,
    NonConvergence,
    NonTermination,
    NotPSD,
    NotSymmetric,
    SingularInnovation,
    ZeroMass,
)
from .kalman import (
    FeedbackMode,
    FilterState,
    SystemModel,
    constrained_step,
    kf_predict,
    kf_update,
    predict,
    update,
)
from .moments import (
    SIGMA_MIN,
    ScalarMoments,
    TransformedConstraint,
    approx_interval_density,
    exact_density,
    interval_kl_divergence,
    interval_truncation_moments,
    lower_truncation_moments,
    metrics_constraint,
    overlap_metric,
    shape_metric,
    surrogate_interval_moments,
    tail_truncation_moments,
    truncation_moments,
    upper_truncation_moments,
)
from .scalar_gauss import NO_LOWER, NO_UPPER, GaussianScalar, WeightedDensity, oracle_moments
from .transform import (
    LinearConstraint,
    StateEstimate,
    apply_constraint,
    inverse_transform,
    jordan_decompose,
    transform_constraint,
    truncate_estimate,
)

__version__ = "0.1.0"
