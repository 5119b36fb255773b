use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid binary matrix: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "coordinate update diverged (non-finite step) with {t_b} parallel updates; \
         reduce the number of parallel coordinate updates"
    )]
    Divergence { t_b: usize },

    #[error("timing table: {0}")]
    Table(String),

    #[error("bad reference optimum: {0}")]
    BadReference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
