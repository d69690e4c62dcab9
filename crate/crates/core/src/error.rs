use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid yaml in {path}: {source}")]
    Yaml {
        path: PathBuf,
        #[source]
        source: serde_yaml::Error,
    },

    #[error("blob length mismatch for tensor `{tensor}`: expected {expected} bytes, got {actual}")]
    BlobLength {
        tensor: String,
        expected: usize,
        actual: usize,
    },

    #[error("shape inconsistency at layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("empty graph")]
    EmptyGraph,

    #[error("dtype mismatch: expected {expected}, got {actual}")]
    Dtype {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("input shape mismatch: expected {expected:?}, got {actual:?}")]
    InputShape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid quantization range: {0}")]
    QuantRange(String),

    #[error("calibration dataset required for {target} ({precision})")]
    CalibrationRequired { target: String, precision: String },

    #[error("unknown target `{0}`")]
    UnknownTarget(String),

    #[error("target `{0}` is already registered")]
    DuplicateTarget(String),

    #[error("precision {precision} is not supported by target {target}")]
    PrecisionConflict { target: String, precision: String },

    #[error("{0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn shape(layer: usize, msg: impl Into<String>) -> Self {
        Error::Shape {
            layer,
            message: msg.into(),
        }
    }
}
