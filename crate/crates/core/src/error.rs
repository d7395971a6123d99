use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("incomplete embedding: {0}")]
    IncompleteEmbedding(String),

    #[error("invalid reference answers: {0}")]
    InvalidReference(String),

    #[error("empty run: {0}")]
    EmptyRun(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("dataset has no valid records")]
    EmptyDataset,

    #[error("duplicate questionId {0}")]
    DuplicateQuestion(String),

    #[error("unknown question id {0}")]
    UnknownQuestion(String),

    #[error("stage artifact out of order: {0}")]
    StageOrder(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
