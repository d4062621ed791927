use thiserror::Error;

/// Error taxonomy for the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: unknown benchmark, non-positive dimension, bad key.
    #[error("configuration error: {0}")]
    Config(String),

    /// Semantically invalid but well-formed input (e.g. volume fractions sum > 1).
    #[error("validation error: {0}")]
    Validation(String),

    /// API misuse: mismatched shapes between operators and fields.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The assembled model is unsolvable (e.g. stiffness not positive definite).
    #[error("model error: {0}")]
    Model(String),

    /// A solver failed to meet its residual contract.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
