use thiserror::Error;

#[derive(Debug, Error)]
pub enum PactError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{what} diverged at iteration {iteration}")]
    Divergence { what: &'static str, iteration: usize },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PactError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PactError::InvalidArgument(msg.into()))
}
