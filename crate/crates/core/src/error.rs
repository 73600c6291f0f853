use thiserror::Error;

/// Failures reported by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// The caller broke a precondition (empty sample sets, bad grids, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// A field violates the obstacle constraint.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    /// The problem admits no feasible competitor.
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
