use thiserror::Error;

/// Errors raised by the estimation and testing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no bandwidth in the candidate grid yields a non-degenerate leave-one-out fit")]
    NoValidBandwidth,

    #[error("degenerate normalizer: c_hat = {0}")]
    DegenerateNormalizer(f64),

    #[error("too few observations: {found} (need at least {required})")]
    TooFewObservations { found: usize, required: usize },

    #[error("parse error at line {line}, column {column} ({name}): {message}")]
    Parse {
        line: usize,
        column: usize,
        name: String,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
