use serde::{Deserialize, Serialize};

use crate::session::{Phase, RejectionReason};

pub type Result<T, E = StudyError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("participant rejected: {0}")]
    Rejected(RejectionReason),
    #[error("session is in phase {actual}, expected {expected}")]
    WrongPhase { expected: String, actual: Phase },
    #[error("out of order: {0}")]
    OutOfOrder(String),
    #[error("duplicate: {0}")]
    Duplicate(String),
    #[error("playback token already used")]
    TokenConsumed,
    #[error("unknown playback token")]
    UnknownToken,
    #[error("operator token missing or invalid")]
    Unauthorized,
    #[error("manifest has {eligible} scenes with all compression levels, {required} required")]
    ManifestTooSmall { eligible: usize, required: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("storage: {0}")]
    Storage(String),
}

/// Stable machine-readable error code returned in API error bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownSession,
    Validation,
    Rejected,
    WrongPhase,
    OutOfOrder,
    Duplicate,
    TokenConsumed,
    UnknownToken,
    Unauthorized,
    ManifestTooSmall,
    Config,
    Storage,
}

impl StudyError {
    pub fn code(&self) -> ErrorCode {
        match self {
            StudyError::UnknownSession(_) => ErrorCode::UnknownSession,
            StudyError::Validation(_) => ErrorCode::Validation,
            StudyError::Rejected(_) => ErrorCode::Rejected,
            StudyError::WrongPhase { .. } => ErrorCode::WrongPhase,
            StudyError::OutOfOrder(_) => ErrorCode::OutOfOrder,
            StudyError::Duplicate(_) => ErrorCode::Duplicate,
            StudyError::TokenConsumed => ErrorCode::TokenConsumed,
            StudyError::UnknownToken => ErrorCode::UnknownToken,
            StudyError::Unauthorized => ErrorCode::Unauthorized,
            StudyError::ManifestTooSmall { .. } => ErrorCode::ManifestTooSmall,
            StudyError::Config(_) => ErrorCode::Config,
            StudyError::Storage(_) => ErrorCode::Storage,
        }
    }
}

impl From<std::io::Error> for StudyError {
    fn from(e: std::io::Error) -> Self {
        StudyError::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for StudyError {
    fn from(e: serde_json::Error) -> Self {
        StudyError::Storage(e.to_string())
    }
}

impl From<teleqa_core::Error> for StudyError {
    fn from(e: teleqa_core::Error) -> Self {
        StudyError::Storage(e.to_string())
    }
}
