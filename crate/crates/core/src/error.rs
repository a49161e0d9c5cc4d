use thiserror::Error;

use crate::poly::RootSet;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix dimension {n} exceeds the cap of {cap}")]
    DimensionTooLarge { n: usize, cap: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("estimated {estimate:.3e} operations exceeds the budget of {budget:.3e}")]
    BudgetExceeded { estimate: f64, budget: f64 },

    #[error("leading coefficient is numerically zero (|c_n| = {magnitude:.3e})")]
    DegenerateLeadingCoefficient { magnitude: f64 },

    #[error("root finder did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize, best: Box<RootSet> },

    #[error("constant term of the polynomial is zero")]
    ZeroConstantTerm,

    #[error(
        "derivative schedule underflows at step {step}: s = {value} < floor {floor} \
         (largest feasible t = {max_feasible_t}, smallest feasible m = {min_feasible_m:?})"
    )]
    ScheduleUnderflow {
        step: usize,
        value: i64,
        floor: usize,
        max_feasible_t: usize,
        min_feasible_m: Option<usize>,
    },

    #[error("requested {requested} derivatives but only {available} are available")]
    InsufficientDerivatives { requested: usize, available: usize },

    #[error("Taylor table entry became non-finite at step {step}")]
    NonFinite { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("epsilon {0} is outside the admissible range")]
    EpsilonOutOfRange(f64),

    #[error("no root-free curve found (best clearance {best_clearance:.3e} vs width {width:.3e})")]
    NoClearCurve { best_clearance: f64, width: f64 },

    #[error("a root lies within {distance:.3e} of the contour |z| = {radius}")]
    RootOnContour { radius: f64, distance: f64 },

    #[error("parameter violation: {0}")]
    ParameterViolation(String),

    #[error("too many corrupted evaluations to reconstruct a degree-{degree} polynomial from {points} points")]
    TooManyErrors { degree: usize, points: usize },
}

impl Error {
    /// Stable, module-qualified identifier used in machine-readable error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionTooLarge { .. } => "permanent_exact.dimension_too_large",
            Error::InvalidMatrix(_) => "matrix_core.invalid_matrix",
            Error::BudgetExceeded { .. } => "interp_poly.budget_exceeded",
            Error::DegenerateLeadingCoefficient { .. } => "interp_poly.degenerate_leading_coefficient",
            Error::NoConvergence { .. } => "interp_poly.no_convergence",
            Error::ZeroConstantTerm => "cac_engine.zero_constant_term",
            Error::ScheduleUnderflow { .. } => "cac_engine.schedule_underflow",
            Error::InsufficientDerivatives { .. } => "cac_engine.insufficient_derivatives",
            Error::NonFinite { .. } => "cac_engine.non_finite",
            Error::InvalidConfig(_) => "cac_engine.invalid_config",
            Error::EpsilonOutOfRange(_) => "curve_planner.epsilon_out_of_range",
            Error::NoClearCurve { .. } => "curve_planner.no_clear_curve",
            Error::RootOnContour { .. } => "stats_lab.root_on_contour",
            Error::ParameterViolation(_) => "stats_lab.parameter_violation",
            Error::TooManyErrors { .. } => "hardness_demo.too_many_errors",
        }
    }
}
