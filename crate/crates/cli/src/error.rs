use std::path::PathBuf;

use pact_core::PactError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] PactError),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: PactError },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("setting `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("unknown setting `{0}`")]
    UnknownKey(String),
    #[error("config line {line} is not `key = value`: {text}")]
    Syntax { line: usize, text: String },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
