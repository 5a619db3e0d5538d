use thiserror::Error;

/// Errors raised by the modelling library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("copula parameter {theta} outside the domain of {family}")]
    ParameterOutOfDomain { family: String, theta: f64 },

    #[error("Kendall's tau {tau} is not attainable by {family}")]
    UnattainableTau { family: String, tau: f64 },

    #[error("unsupported dimension {0} (at most 4)")]
    UnsupportedDimension(usize),

    #[error("correlation matrix is not positive definite")]
    SingularCorrelation,

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("objective evaluated to NaN at {0:?}")]
    NanObjective(Vec<f64>),

    #[error("root bracket [{lo}, {hi}] does not straddle the target")]
    BadBracket { lo: f64, hi: f64 },

    #[error("root finding did not converge")]
    NoConvergence,

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid family specification `{0}`")]
    UnknownFamily(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("scale error: {0}")]
    Scale(String),

    #[error("too many failed replicates: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
