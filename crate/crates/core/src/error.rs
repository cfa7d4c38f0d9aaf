use thiserror::Error;

/// Errors raised by the steering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time {t} is not before the horizon T = {horizon}")]
    Horizon { t: f64, horizon: f64 },

    #[error("covariance integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("time {t} lies outside the integrated flow [{start}, {end}]")]
    Extrapolation { t: f64, start: f64, end: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
