//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A growth trajectory left the size window `[x_lo, 2*x_hi]`.
    #[error("growth trajectory left the size domain: x = {x}, requested span {span}")]
    DomainExit { x: f64, span: f64 },

    /// A tabulated growth law evaluated to a non-positive velocity.
    #[error("growth velocity is non-positive at x = {x}: g = {g}")]
    NonPositiveG { x: f64, g: f64 },

    /// The division operator is identically zero at this age.
    #[error("division operator vanishes identically at age {a}")]
    BadAge { a: f64 },

    /// Initial size outside the newborn window `[x_lo, x_hi]`.
    #[error("initial size {x_b} outside the newborn window [{lo}, {hi}]")]
    OutOfWindow { x_b: f64, lo: f64, hi: f64 },

    /// Survival probability underflowed; the 1/Phi weight diverges.
    #[error("survival function vanished at (x_b, a) = ({x_b}, {a})")]
    SurvivalZero { x_b: f64, a: f64 },

    /// A model assumption required by the operation failed validation.
    #[error("model assumption violated: {0}")]
    AssumptionViolation(String),

    /// Spectral-radius bracket for the growth-rate bisection is invalid.
    #[error("bisection bracket failure: r(K_0) = {r0} <= 1 on the discrete grid")]
    BracketFailure { r0: f64 },

    /// Power iteration did not reach the requested tolerance.
    #[error("eigensolve did not converge: radius estimate {radius} after {iterations} iterations")]
    NoConvergence { radius: f64, iterations: usize },

    /// Initial data carries mass where the 1/Phi weight overflows.
    #[error("initial data has mass within {delta} of the maximal age at x_b = {x_b}")]
    WeightDivergence { x_b: f64, delta: f64 },

    /// Negative values where a density was expected.
    #[error("negative input: {0}")]
    NegativeInput(String),

    /// Trajectory too short for the requested estimator.
    #[error("trajectory spans {span} but the estimator needs at least {required}")]
    ShortTrajectory { span: f64, required: f64 },

    /// Growth law fails g(2x) = 2g(x) where the caller requires it.
    #[error("growth law is not dyadically homogeneous: |g(2x) - 2g(x)| = {gap} at x = {x}")]
    NotHomogeneous { x: f64, gap: f64 },

    /// Dyadic seed violates the endpoint matching conditions.
    #[error("dyadic seed mismatch: {0}")]
    SeedMismatch(String),

    /// Euler-Maruyama step drove the size non-positive.
    #[error("stochastic growth step underflowed at x = {x}")]
    StepUnderflow { x: f64 },

    /// Malformed model construction input.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Malformed external input (CSV tables, configs).
    #[error("parse error: {0}")]
    Parse(String),
}
