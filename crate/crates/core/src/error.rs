use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value outside its mathematical domain (e.g. a frequency outside [-1/2, 1/2)).
    #[error("domain error: {0}")]
    Domain(String),
    /// An invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A scenario that cannot be sampled or synthesised.
    #[error("scenario error: {0}")]
    Scenario(String),
    /// Bad input data (wrong length, non-finite samples, ...).
    #[error("input error: {0}")]
    Input(String),
    /// A factorization or solve failed.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A configuration file does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// An internal invariant was violated; this is a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
