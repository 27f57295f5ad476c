//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ppm parse error at byte {offset}: {msg}")]
    Ppm { offset: usize, msg: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate region {0:?}")]
    DegenerateRegion([u32; 4]),

    #[error("strategy {strategy} requires a non-empty box source")]
    MissingBoxes { strategy: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("duplicate key {0:?}")]
    DuplicateKey(String),

    #[error("missing keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("zero-length vector cannot be normalized")]
    ZeroNorm,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },

    #[error("version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("class id {class} out of range (n_classes = {n_classes})")]
    ClassOutOfRange { class: usize, n_classes: usize },

    #[error("malformed record at line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
