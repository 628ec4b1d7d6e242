use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid representation: {0}")]
    InvalidRepresentation(String),
    #[error("index {index} out of range (1..={len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid effective Hamiltonian: {0}")]
    InvalidEffectiveHamiltonian(String),
    #[error("no witness found after {0} attempts")]
    NoWitness(usize),
    #[error("representations not trajectory-equivalent: {0}")]
    NotEquivalent(String),
    #[error("gauge error: {0}")]
    Gauge(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
