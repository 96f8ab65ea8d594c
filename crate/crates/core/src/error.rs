use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{what} did not converge after {iterations} iterations")]
    Numerical { what: &'static str, iterations: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter block `{block}`")]
    Optimizer { block: String },

    #[error("query {query:?} lies outside the training range")]
    Extrapolation { query: Vec<f64> },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("version mismatch: file has `{found}`, expected `{expected}`")]
    Version { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Dimension { op, lhs, rhs }
    }
}
