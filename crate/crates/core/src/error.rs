use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A setting is out of its admissible range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An evaluation was requested outside a function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Required state for the selected model is missing.
    #[error("state error: {0}")]
    State(String),

    /// The requested (formulation, battery model) pair does not exist.
    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// The solver could not produce a usable result.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
