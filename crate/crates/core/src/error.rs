use std::path::PathBuf;

use thiserror::Error;

use crate::providers::Capability;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by every stage of the engine.
///
/// Variants mirror the stable error codes reported in run summaries
/// (`DUPLICATE_ID`, `INVALID_PLAN`, ...); see [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("clip id {0} already present in manifest")]
    DuplicateId(String),

    #[error("verdict for clip {clip_id} rejected: {reason}")]
    VerdictOrder { clip_id: String, reason: String },

    #[error("unknown clip id {0}")]
    UnknownClip(String),

    #[error("invalid frame plan: {0}")]
    InvalidPlan(String),

    #[error("decode failed for {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported or corrupt media {path}: {reason}")]
    InvalidMedia { path: PathBuf, reason: String },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("provider contract violated ({capability:?}): {reason}")]
    ProviderContract { capability: Capability, reason: String },

    #[error("provider unavailable ({capability:?}): {reason}")]
    ProviderUnavailable { capability: Capability, reason: String },

    #[error("provider does not offer capability {0:?}")]
    Unsupported(Capability),

    #[error("point cloud is empty after filtering")]
    EmptyCloud,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether retrying the same operation can succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Decode { .. } | Error::ProviderUnavailable { .. }
        )
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO_ERROR",
            Error::DuplicateId(_) => "DUPLICATE_ID",
            Error::VerdictOrder { .. } => "VERDICT_ORDER",
            Error::UnknownClip(_) => "UNKNOWN_CLIP",
            Error::InvalidPlan(_) => "INVALID_PLAN",
            Error::Decode { .. } => "DECODE_ERROR",
            Error::InvalidMedia { .. } => "INVALID_MEDIA",
            Error::PreconditionFailed(_) => "PRECONDITION_FAILED",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::ProviderContract { .. } => "PROVIDER_CONTRACT_ERROR",
            Error::ProviderUnavailable { .. } => "PROVIDER_UNAVAILABLE",
            Error::Unsupported(_) => "UNSUPPORTED_CAPABILITY",
            Error::EmptyCloud => "EMPTY_CLOUD",
            Error::DegenerateGeometry(_) => "DEGENERATE_GEOMETRY",
            Error::Config(_) => "CONFIG_ERROR",
            Error::Malformed(_) => "MALFORMED",
            Error::Json(_) => "MALFORMED",
        }
    }
}
