use thiserror::Error;

/// Errors produced by the fitting, simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuscaError {
    #[error("series is empty")]
    EmptySeries,
    #[error("timestamp at position {index} is not finite")]
    NonFinite { index: usize },
    #[error("duplicate timestamp {value}")]
    DuplicateTimestamp { value: f64 },
    #[error("timestamp {value} lies outside the window [{start}, {end}]")]
    TimestampOutsideWindow { value: f64, start: f64, end: f64 },
    #[error("invalid observation window [{start}, {end}]")]
    InvalidWindow { start: f64, end: f64 },
    #[error("time {t} lies outside the window [{start}, {end}]")]
    TimeOutsideWindow { t: f64, start: f64, end: f64 },
    #[error("need at least {required} events, got {actual}")]
    TooFewEvents { required: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate mixture parameters (lambda_p = 0 and mu = infinity)")]
    DegenerateParams,
    #[error("intensity underflow at event {index}")]
    NumericalUnderflow { index: usize },
    #[error("every refinement replication degenerated")]
    RefinementFailed,
    #[error("calibration could not bracket the target: {0}")]
    UnreachableTarget(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("optimizer failed: {0}")]
    FitFailed(String),
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, BuscaError>;
