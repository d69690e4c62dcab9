use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("server {url} is unreachable: {reason}")]
    Unreachable { url: String, reason: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] aifgen_core::Error),
    #[error("baseline `{0}` is not among the variants")]
    UnknownBaseline(String),
    #[error("no benchmark results to report")]
    EmptyResults,
    #[error("duplicate variant `{0}`")]
    DuplicateVariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

pub type Result<T> = std::result::Result<T, Error>;
