use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("config: {0}")]
    Config(String),
    #[error("experiment failed: {0}")]
    Experiment(String),
    #[error("macro policy from cluster {source_cluster} to bottleneck {bottleneck}: {unreachable} of {total} states cannot reach it")]
    MacroPolicy {
        source_cluster: usize,
        bottleneck: usize,
        unreachable: usize,
        total: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
