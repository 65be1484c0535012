use thiserror::Error;

/// Errors raised by the model, filter and estimation layers.
#[derive(Debug, Error)]
pub enum SvarError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {context} (expected {expected}, got {got})")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid skew-t parameters: delta = {delta}, nu = {nu}")]
    InvalidSkewT { delta: f64, nu: f64 },

    #[error("identification condition violated: {0}")]
    Identification(String),

    #[error("moment pair (skewness {skewness}, kurtosis {kurtosis}) is not attainable; nearest feasible point is delta = {nearest_delta}, nu = {nearest_nu}")]
    InfeasibleMoments {
        skewness: f64,
        kurtosis: f64,
        nearest_delta: f64,
        nearest_nu: f64,
    },

    #[error("insufficient history: need {needed} past observations, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("filter diverged at t = {t} (|theta| = {magnitude:e})")]
    Diverged { t: usize, magnitude: f64 },

    #[error("covariance is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("unstable data-generating process: spectral radius {0}")]
    ExplosiveDgp(f64),

    #[error("simulated sample exploded at t = {t} (magnitude {magnitude:e})")]
    SampleExploded { t: usize, magnitude: f64 },
}

pub type Result<T> = std::result::Result<T, SvarError>;
