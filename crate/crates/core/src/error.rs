use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lambda must be positive (got {0})")]
    NonPositiveLambda(f64),
    #[error("lambda must be finite (got {0})")]
    NonFiniteLambda(f64),
    #[error("kappa must be at least 1")]
    ZeroKappa,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scripted arrivals must be strictly increasing and positive (index {index}, value {value})")]
    UnsortedArrivals { index: usize, value: f64 },
    #[error("query time {time} lies beyond the trace horizon {horizon}")]
    BeyondHorizon { time: f64, horizon: f64 },
    #[error("records cover {covered} time units but {requested} were requested (short by {shortfall})")]
    InsufficientRecords {
        covered: f64,
        requested: f64,
        shortfall: f64,
    },
    #[error("power iteration did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("objective has two separated maxima of equal height near {first} and {second}")]
    Multimodal { first: f64, second: f64 },
    #[error("kappa = {0} is too large for this computation (at most 3 supported)")]
    KappaTooLarge(u32),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
