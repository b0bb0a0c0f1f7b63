use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Convergence,
    ExternalTool,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported colorspace `{0}` (only 8-bit 4:2:0 is accepted)")]
    UnsupportedColorspace(String),
    #[error("truncated frame {frame}: expected {expected} bytes, got {got}")]
    TruncatedFrame { frame: usize, expected: usize, got: usize },
    #[error("stream length {len} is not a multiple of the {frame_size}-byte frame size")]
    FrameSize { len: usize, frame_size: usize },
    #[error("invalid dimensions {width}x{height}: {reason}")]
    Dimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },
    #[error("clip contains no frames")]
    EmptyClip,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame count mismatch: reference has {reference}, distorted has {distorted}")]
    FrameCountMismatch { reference: usize, distorted: usize },
    #[error("plane too small: {0}")]
    TooSmall(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("solver did not converge after {iterations} iterations (KKT violation {violation:e})")]
    NoConvergence { iterations: usize, violation: f64 },
    #[error("feature config version mismatch: model expects {expected}, got {got}")]
    VersionMismatch { expected: String, got: String },
    #[error("model schema version {found} is not supported (expected {expected})")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("corrupted payload: {0}")]
    Corrupted(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid rating: {0}")]
    Rating(String),
    #[error("statistical precondition failed: {0}")]
    Precondition(String),
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("encoder configuration: {0}")]
    EncoderConfig(String),
    #[error("external command `{command}` failed: {reason}")]
    External { command: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_)
            | Error::EncoderConfig(_)
            | Error::VersionMismatch { .. }
            | Error::SchemaVersion { .. } => ErrorClass::Config,
            Error::NoConvergence { .. } => ErrorClass::Convergence,
            Error::External { .. } => ErrorClass::ExternalTool,
            _ => ErrorClass::Data,
        }
    }
}
