//! Backend for running the subjective study: participant gating, vision
//! screening, constrained scenario randomization, single-use playback,
//! rating persistence in an append-only log, and CSV export.

pub mod assign;
pub mod config;
pub mod error;
pub mod http;
pub mod screening;
pub mod service;
pub mod session;
pub mod store;

pub use assign::{assign_scenarios, check_assignments, eligible_scenes, EligibleScene};
pub use config::{StudyConfig, SCENARIOS_PER_SESSION};
pub use error::{ErrorCode, Result, StudyError};
pub use http::{router, serve};
pub use screening::{landolt_orientations, Orientation, ScreeningChallenge, ScreeningSubmission};
pub use service::{
    derive_seed, participant_id, AssignmentsView, CreateSession, Export, PlaybackGrant,
    QuestionnaireSchema, SessionView, Study,
};
pub use session::{
    Answer, DemographicsInput, Phase, RejectionReason, Stage, SubmissionEnvelope, Which,
};
