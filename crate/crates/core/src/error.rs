use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Allocation state and overlay disagree on which edges or helpers exist.
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// The peer has no candidate outside its active set, so it never chokes.
    #[error("no alternative neighbors")]
    NoAlternatives,

    #[error("unknown choke policy `{0}`")]
    UnknownPolicy(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
