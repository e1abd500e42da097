use thiserror::Error;

/// Errors surfaced to callers. Contract violations (bad step lengths, jets read
/// beyond their order) panic instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model rejected: {0}")]
    Model(String),
    #[error("invalid jump law: {0}")]
    JumpLaw(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
