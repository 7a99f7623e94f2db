use thiserror::Error;

/// Errors raised by the geometry, projection, model and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid convex set: {0}")]
    InvalidSet(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("projection did not converge: {0}")]
    NonConvergence(String),

    #[error("every sampled pair was degenerate ({0} pairs skipped)")]
    DegenerateSet(usize),

    #[error("8 * ctilde * eta = {0} is not below 1")]
    EtaTooLarge(f64),

    #[error("ctilde is zero: the convergence radius is unbounded")]
    LinearCaseUnbounded,

    #[error("u_k = {0} is not positive (starting point outside the radius or eta too large)")]
    NonpositiveU(f64),

    #[error("zero gradient T_k while the residual {residual} exceeds eta_hat")]
    ZeroGradient { residual: f64 },

    #[error("internal step-size identity failed: {0}")]
    SelfCheck(String),

    #[error("no level satisfies (3 + epsilon) * eta_n <= eta_hat")]
    NoSuchLevel,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("schedule failed transition validation: {0}")]
    TransitionInvalid(String),

    #[error("tau = {tau} must lie in (0, {bound})")]
    TauOutOfRange { tau: f64, bound: f64 },

    #[error("lambda = {lambda} is below 100 * eta_hat = {min}")]
    LambdaTooSmall { lambda: f64, min: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
