use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible targets: {name} = {value:.6e} lies outside [0, 1]")]
    Infeasible { name: String, value: f64 },

    #[error("absent data: {0}")]
    AbsentData(String),

    #[error("g2 = {0} is not invertible to a cluster size (requires g2_1 <= g2 < 1)")]
    NotInvertible(f64),

    #[error("capacity exceeded: {what} = {value} (maximum {max})")]
    Capacity { what: String, value: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("record parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data mismatch: {0}")]
    DataMismatch(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
