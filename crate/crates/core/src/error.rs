use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("video id {id:?} listed in both {first} and {second}")]
    DuplicateId {
        id: String,
        first: String,
        second: String,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersionMismatch { found: String, expected: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("no split assignment for video {0:?}")]
    UnknownSplit(String),

    #[error("decode error for {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("video {0} contains no frames")]
    EmptyVideo(PathBuf),

    #[error("degenerate face box after clamping: {0}")]
    DegenerateBox(String),

    #[error("no videos found in {0}")]
    NoVideos(PathBuf),

    #[error("selection matched no samples: {0}")]
    EmptySelection(String),

    #[error("window size {0} is even; windows must have an odd number of frames")]
    EvenWindow(usize),

    #[error("window size mismatch: expected {expected} frames, got {found}")]
    WindowSizeMismatch { expected: usize, found: usize },

    #[error("samples contain only one class ({0})")]
    SingleClass(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient at parameter index {0}")]
    NonFiniteGradient(usize),

    #[error("checkpoint unavailable at {path}: {message}")]
    CheckpointMissing { path: PathBuf, message: String },

    #[error("checkpoint {0} shares no parameter names with the model")]
    NoParameterOverlap(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(origin: impl std::fmt::Display, message: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.to_string(),
            message: message.into(),
        }
    }

    /// Usage and configuration problems, as opposed to internal failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::EvenWindow(_)
                | Error::Config(_)
                | Error::NoVideos(_)
                | Error::WindowSizeMismatch { .. }
                | Error::EmptySelection(_)
                | Error::UnknownSplit(_)
        )
    }
}
