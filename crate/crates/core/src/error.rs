use thiserror::Error;

/// Errors raised by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix or gate failed a structural check (unitarity, index sets).
    #[error("validation error: {0}")]
    Validation(String),

    /// The requested size exceeds the dense-simulation guard.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A post-selection branch has (numerically) zero probability.
    #[error("impossible outcome: {0}")]
    ImpossibleOutcome(String),

    /// A parameter sits on a singular point of a formula.
    #[error("singular parameter: {0}")]
    Singularity(String),

    /// A function value falls outside the range that can be block-encoded.
    #[error("value out of range: {0}")]
    Range(String),

    /// The requested feature or order is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A configuration document is malformed.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 3 for a zero-probability
    /// post-selection, 4 for the resource guard, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ImpossibleOutcome(_) => 3,
            Error::Resource(_) => 4,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Singularity("x".into()).exit_code(), 2);
        assert_eq!(Error::ImpossibleOutcome("x".into()).exit_code(), 3);
        assert_eq!(Error::Resource("x".into()).exit_code(), 4);
    }
}
