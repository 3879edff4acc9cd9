use crate::metric::ObjectId;

/// Errors raised by the search toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("object id {id} out of range for a space of {n} objects")]
    InvalidId { id: ObjectId, n: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no candidate objects to propose from {0}")]
    NoCandidates(ObjectId),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("instance of {requested} objects exceeds the size guard of {limit}")]
    SizeGuard { requested: u128, limit: usize },

    #[error("dataset format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
