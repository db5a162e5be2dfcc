use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Lie derivative order {requested} exceeds configured maximum {max}")]
    OrderExceeded { requested: usize, max: usize },

    #[error("non-finite entries in {block}")]
    NonFinite { block: String },

    #[error("time {t} outside spline span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    #[error("flatness singularity at t = {t}: {reason}")]
    FlatnessSingularity { t: f64, reason: String },

    #[error("state transition matrix is singular (condition number {condition:e})")]
    SingularTransition { condition: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("random spline sampling failed after {0} attempts")]
    SamplingFailed(usize),

    #[error("filter covariance lost positive definiteness at t = {t} (min eigenvalue {min_eig:e})")]
    CovarianceIndefinite { t: f64, min_eig: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
