use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at token {position} ({token:?}): {reason}")]
    Parse { token: String, position: usize, reason: String },

    #[error("spec error: {0}")]
    Spec(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),

    #[error("training aborted: non-finite {component}")]
    TrainingAbort { component: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short stable identifier, used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Spec(_) => "spec",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Domain(_) => "domain",
            Error::Corruption(_) => "corruption",
            Error::Config(_) => "config",
            Error::DigestMismatch { .. } => "digest_mismatch",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::TrainingAbort { .. } => "training_abort",
            Error::Image(_) => "image",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
