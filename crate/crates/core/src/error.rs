use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("instance too large for exhaustive search: {count} candidate assignments (limit {limit})")]
    TooLarge { count: u128, limit: u128 },

    #[error("assignment has no matched pairs")]
    EmptyAssignment,

    #[error("client has no training data")]
    EmptyData,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
