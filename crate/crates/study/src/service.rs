//! The study state machine behind the HTTP API. Operations on one session
//! are serialized by a per-session lock; every accepted operation is
//! appended to the record log before it changes in-memory state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use teleqa_core::dataset::{load_manifest, DatasetManifest, REFERENCE_CRF};
use teleqa_core::stats::{write_ratings, Dimension, ObjectCheck, RatingRecord};

use crate::assign::{assign_scenarios, eligible_scenes, EligibleScene};
use crate::config::{StudyConfig, SCENARIOS_PER_SESSION};
use crate::error::{Result, StudyError};
use crate::screening::{
    check_ppmm, landolt_challenge, landolt_svg, score_ishihara, score_landolt, ScreeningChallenge,
    ScreeningSubmission, Score,
};
use crate::session::{
    Answer, DemographicsInput, Phase, RejectionReason, ScenarioProgress, Session, Stage,
    SubmissionEnvelope, VisionResult, Which,
};
use crate::store::{Event, EventLog};

const INITIAL_DIMENSIONS: [Dimension; 3] = [
    Dimension::DetailLoss,
    Dimension::Drivability,
    Dimension::SituationalAwareness,
];
const REFLECTION_DIMENSIONS: [Dimension; 1] = [Dimension::Reflection];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub demographics: DemographicsInput,
    pub screen_diagonal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    #[serde(flatten)]
    pub phase: Phase,
    pub scenarios: usize,
    pub completed_scenarios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningOutcome {
    pub session_id: String,
    #[serde(flatten)]
    pub phase: Phase,
    pub landolt_correct: usize,
    pub landolt_total: usize,
    pub ishihara_correct: usize,
    pub ishihara_total: usize,
    /// Width at which videos are rendered on this participant's screen.
    pub video_width_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStatus {
    pub index: usize,
    pub compressed_issued: bool,
    pub original_issued: bool,
    pub initial_submitted: bool,
    pub reflection_submitted: bool,
}

/// Participant-facing progress. Scene and compression level stay hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentsView {
    pub session_id: String,
    #[serde(flatten)]
    pub phase: Phase,
    pub current_index: Option<usize>,
    pub video_width_px: Option<f64>,
    pub scenarios: Vec<ScenarioStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackGrant {
    pub index: usize,
    pub which: Which,
    pub token: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionItems {
    pub dimension: Dimension,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireSchema {
    pub scale: [u8; 2],
    pub initial: Vec<DimensionItems>,
    pub reflection: Vec<DimensionItems>,
    pub object_options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Export {
    pub csv: Vec<u8>,
    pub rows: usize,
    pub sessions: usize,
    pub warning: Option<String>,
}

struct TokenState {
    path: PathBuf,
    consumed_at: Option<Instant>,
    consumed: bool,
}

pub struct Study {
    config: StudyConfig,
    manifest: DatasetManifest,
    scenes: Vec<EligibleScene>,
    secret: String,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    tokens: Mutex<HashMap<String, TokenState>>,
    log: Mutex<EventLog>,
    ids: Mutex<StdRng>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Session seed: the first eight bytes of SHA-256 over the session id and
/// the server secret.
pub fn derive_seed(session_id: &str, secret: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(session_id.as_bytes())
        .chain_update(b":")
        .chain_update(secret.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Pseudonymous participant id used in exports, so session ids (which
/// authorize API access) never leave the service.
pub fn participant_id(session_id: &str) -> String {
    let digest = Sha256::new()
        .chain_update(b"participant:")
        .chain_update(session_id.as_bytes())
        .finalize();
    format!("p{}", hex::encode(&digest[..6]))
}

fn random_hex(rng: &mut StdRng) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl Study {
    /// Loads the manifest and replays the record log named in `config`.
    pub fn open(config: StudyConfig) -> Result<Self> {
        config.validate()?;
        let manifest = load_manifest(&config.manifest)
            .map_err(|e| StudyError::Config(format!("manifest: {e}")))?;
        let (log, events) = EventLog::open(&config.log_path)?;
        let mut study = Self::build(config, manifest, log, StdRng::from_os_rng())?;
        for event in &events {
            study.replay(event)?;
        }
        log::info!(
            "study ready: {} scenes eligible, {} sessions replayed",
            study.scenes.len(),
            study.sessions.read().map(|s| s.len()).unwrap_or(0)
        );
        Ok(study)
    }

    /// A study backed by an in-memory log with reproducible identifiers.
    pub fn in_memory(config: StudyConfig, manifest: DatasetManifest, id_seed: u64) -> Result<Self> {
        config.validate()?;
        Self::build(config, manifest, EventLog::in_memory(), StdRng::seed_from_u64(id_seed))
    }

    fn build(config: StudyConfig, manifest: DatasetManifest, log: EventLog, mut ids: StdRng) -> Result<Self> {
        manifest
            .validate()
            .map_err(|e| StudyError::Config(e.to_string()))?;
        let scenes = eligible_scenes(&manifest);
        if scenes.len() < SCENARIOS_PER_SESSION {
            return Err(StudyError::ManifestTooSmall {
                eligible: scenes.len(),
                required: SCENARIOS_PER_SESSION,
            });
        }
        let secret = match &config.secret {
            Some(s) => s.clone(),
            None => {
                log::warn!("no secret configured; session seeds use a random per-process secret");
                random_hex(&mut ids)
            }
        };
        Ok(Study {
            config,
            manifest,
            scenes,
            secret,
            sessions: RwLock::new(HashMap::new()),
            tokens: Mutex::new(HashMap::new()),
            log: Mutex::new(log),
            ids: Mutex::new(ids),
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    /// Lines written so far when backed by an in-memory log.
    pub fn log_lines(&self) -> Vec<String> {
        lock(&self.log).memory_lines().map(|l| l.to_vec()).unwrap_or_default()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| StudyError::UnknownSession(id.to_string()))
    }

    fn append(&self, event: &Event) -> Result<()> {
        lock(&self.log).append(event)
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.config.media_root.join(path)
        }
    }

    fn media_path(&self, session: &Session, index: usize, which: Which) -> Result<PathBuf> {
        let a = &session.assignments[index];
        let path = match which {
            Which::Compressed => self
                .manifest
                .asset(&a.asset_id)
                .map(|x| x.path.clone())
                .ok_or_else(|| StudyError::Storage(format!("asset `{}` left the manifest", a.asset_id)))?,
            Which::Original => {
                let encoded_reference = self
                    .manifest
                    .assets
                    .iter()
                    .find(|x| x.content_id == a.content_id && x.crf == REFERENCE_CRF);
                match encoded_reference {
                    Some(x) => x.path.clone(),
                    None => self
                        .manifest
                        .scene(&a.content_id)
                        .map(|s| s.reference_path.clone())
                        .ok_or_else(|| StudyError::Storage(format!("scene `{}` left the manifest", a.content_id)))?,
                }
            }
        };
        Ok(self.resolve(&path))
    }

    fn video_width_px(&self, session: &Session) -> Option<f64> {
        session
            .vision
            .as_ref()
            .map(|v| v.ppmm * self.config.video_width_mm)
    }

    fn view(session: &Session) -> SessionView {
        SessionView {
            session_id: session.session_id.clone(),
            phase: session.phase,
            scenarios: session.assignments.len(),
            completed_scenarios: session
                .progress
                .iter()
                .filter(|p| p.reflection.is_some())
                .count(),
        }
    }

    /// Applies a recorded event to a session. Validation has already
    /// happened (live) or happened when the event was first recorded
    /// (replay).
    fn apply(session: &mut Session, event: &Event) -> Result<()> {
        match event {
            Event::ScreeningRecorded {
                vision,
                outcome,
                assignments,
                ..
            } => {
                session.advance(*outcome)?;
                session.vision = Some(vision.clone());
                session.assignments = assignments.clone();
                session.progress = vec![ScenarioProgress::default(); assignments.len()];
            }
            Event::PlaybackIssued {
                index, which, token, ..
            } => {
                let p = session
                    .progress
                    .get_mut(*index)
                    .ok_or_else(|| StudyError::Storage(format!("playback for missing scenario {index}")))?;
                match which {
                    Which::Compressed => p.compressed_token = Some(token.clone()),
                    Which::Original => p.original_token = Some(token.clone()),
                }
                if session.phase == Phase::Screened {
                    session.advance(Phase::Rating { index: 0 })?;
                }
            }
            Event::SubmissionRecorded {
                index,
                stage,
                answers,
                object_check,
                ..
            } => {
                let count = session.assignments.len();
                let p = session
                    .progress
                    .get_mut(*index)
                    .ok_or_else(|| StudyError::Storage(format!("submission for missing scenario {index}")))?;
                let next = match stage {
                    Stage::Initial => {
                        p.initial = Some(answers.clone());
                        Phase::Reflecting { index: *index }
                    }
                    Stage::Reflection => {
                        p.reflection = Some(answers.clone());
                        p.object_check = object_check.clone();
                        if index + 1 == count {
                            Phase::Done
                        } else {
                            Phase::Rating { index: index + 1 }
                        }
                    }
                };
                session.advance(next)?;
            }
            Event::SessionCreated { .. } | Event::PlaybackConsumed { .. } => {}
        }
        Ok(())
    }

    fn replay(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::SessionCreated {
                session_id,
                seed,
                demographics,
                screen_diagonal,
                ..
            } => {
                let session = Session::new(session_id.clone(), *seed, demographics.clone(), *screen_diagonal);
                self.sessions
                    .get_mut()
                    .unwrap_or_else(|e| e.into_inner())
                    .insert(session_id.clone(), Arc::new(Mutex::new(session)));
            }
            Event::PlaybackConsumed { token, .. } => {
                let tokens = self.tokens.get_mut().unwrap_or_else(|e| e.into_inner());
                let state = tokens
                    .get_mut(token)
                    .ok_or_else(|| StudyError::Storage(format!("consumption of unknown token {token}")))?;
                state.consumed = true;
            }
            Event::ScreeningRecorded { session_id, .. }
            | Event::PlaybackIssued { session_id, .. }
            | Event::SubmissionRecorded { session_id, .. } => {
                let handle = self.session(session_id)?;
                let mut session = lock(&handle);
                Self::apply(&mut session, event)?;
                if let Event::PlaybackIssued {
                    index, which, token, ..
                } = event
                {
                    let path = self.media_path(&session, *index, *which)?;
                    lock(&self.tokens).insert(
                        token.clone(),
                        TokenState {
                            path,
                            consumed_at: None,
                            consumed: false,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    pub fn create_session(&self, request: &CreateSession) -> Result<SessionView> {
        let demographics = request.demographics.complete()?;
        let diagonal = request
            .screen_diagonal
            .ok_or_else(|| StudyError::Validation("screen_diagonal is required".into()))?;
        if !(diagonal.is_finite() && diagonal > 0.0) {
            return Err(StudyError::Validation(format!("invalid screen_diagonal {diagonal}")));
        }
        if diagonal < self.config.min_screen_diagonal {
            return Err(StudyError::Rejected(RejectionReason::ScreenTooSmall));
        }
        let session_id = random_hex(&mut lock(&self.ids));
        let seed = derive_seed(&session_id, &self.secret);
        let event = Event::SessionCreated {
            at_ms: now_ms(),
            session_id: session_id.clone(),
            seed,
            demographics: demographics.clone(),
            screen_diagonal: diagonal,
        };
        let session = Session::new(session_id.clone(), seed, demographics, diagonal);
        let view = Self::view(&session);
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        self.append(&event)?;
        sessions.insert(session_id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn session_view(&self, session_id: &str) -> Result<SessionView> {
        let handle = self.session(session_id)?;
        let session = lock(&handle);
        Ok(Self::view(&session))
    }

    fn require_created(session: &Session) -> Result<()> {
        if session.phase != Phase::Created {
            return Err(StudyError::WrongPhase {
                expected: "created".into(),
                actual: session.phase,
            });
        }
        Ok(())
    }

    pub fn screening_challenge(&self, session_id: &str, ppmm: f64) -> Result<ScreeningChallenge> {
        check_ppmm(ppmm, self.config.ppmm_range)?;
        let handle = self.session(session_id)?;
        let session = lock(&handle);
        Self::require_created(&session)?;
        Ok(ScreeningChallenge {
            ppmm,
            landolt: landolt_challenge(ppmm, &self.config.landolt),
            ishihara_plates: self
                .config
                .ishihara
                .plates
                .iter()
                .map(|p| p.plate_id.clone())
                .collect(),
        })
    }

    pub fn landolt_ring_svg(&self, session_id: &str, ppmm: f64, index: usize) -> Result<String> {
        check_ppmm(ppmm, self.config.ppmm_range)?;
        let handle = self.session(session_id)?;
        let session = lock(&handle);
        Self::require_created(&session)?;
        landolt_svg(session.seed, ppmm, index, &self.config.landolt)
    }

    pub fn submit_screening(&self, session_id: &str, submission: &ScreeningSubmission) -> Result<ScreeningOutcome> {
        let handle = self.session(session_id)?;
        let mut session = lock(&handle);
        Self::require_created(&session)?;
        check_ppmm(submission.ppmm, self.config.ppmm_range)?;
        let landolt: Score = score_landolt(session.seed, &submission.landolt_answers, &self.config.landolt)?;
        let ishihara = score_ishihara(&submission.ishihara_answers, &self.config.ishihara)?;
        let passed = landolt.passes(self.config.landolt.pass_fraction)
            && ishihara.passes(self.config.ishihara.pass_fraction);
        let (outcome, assignments) = if passed {
            (
                Phase::Screened,
                assign_scenarios(&self.scenes, SCENARIOS_PER_SESSION, session.seed)?,
            )
        } else {
            (
                Phase::Rejected {
                    reason: RejectionReason::Vision,
                },
                Vec::new(),
            )
        };
        let event = Event::ScreeningRecorded {
            at_ms: now_ms(),
            session_id: session_id.to_string(),
            vision: VisionResult {
                ppmm: submission.ppmm,
                landolt_correct: landolt.correct,
                landolt_total: landolt.total,
                ishihara_correct: ishihara.correct,
                ishihara_total: ishihara.total,
                passed,
            },
            outcome,
            assignments,
        };
        self.append(&event)?;
        Self::apply(&mut session, &event)?;
        Ok(ScreeningOutcome {
            session_id: session_id.to_string(),
            phase: session.phase,
            landolt_correct: landolt.correct,
            landolt_total: landolt.total,
            ishihara_correct: ishihara.correct,
            ishihara_total: ishihara.total,
            video_width_px: submission.ppmm * self.config.video_width_mm,
        })
    }

    pub fn assignments(&self, session_id: &str) -> Result<AssignmentsView> {
        let handle = self.session(session_id)?;
        let session = lock(&handle);
        Ok(AssignmentsView {
            session_id: session.session_id.clone(),
            phase: session.phase,
            current_index: session.current_index(),
            video_width_px: self.video_width_px(&session),
            scenarios: session
                .progress
                .iter()
                .enumerate()
                .map(|(index, p)| ScenarioStatus {
                    index,
                    compressed_issued: p.compressed_token.is_some(),
                    original_issued: p.original_token.is_some(),
                    initial_submitted: p.initial.is_some(),
                    reflection_submitted: p.reflection.is_some(),
                })
                .collect(),
        })
    }

    fn require_scenario(session: &Session, index: usize) -> Result<usize> {
        let current = session.current_index().ok_or_else(|| StudyError::WrongPhase {
            expected: "rating or reflecting".into(),
            actual: session.phase,
        })?;
        if index >= session.assignments.len() {
            return Err(StudyError::Validation(format!(
                "scenario {index} out of range (0..{})",
                session.assignments.len()
            )));
        }
        if index != current {
            return Err(StudyError::OutOfOrder(format!(
                "scenario {index} requested while the session is at scenario {current}"
            )));
        }
        Ok(current)
    }

    pub fn issue_playback(&self, session_id: &str, index: usize, which: Which) -> Result<PlaybackGrant> {
        let handle = self.session(session_id)?;
        let mut session = lock(&handle);
        Self::require_scenario(&session, index)?;
        if session.progress[index].token(which).is_some() {
            return Err(StudyError::Duplicate(format!(
                "the {} video of scenario {index} was already issued",
                match which {
                    Which::Compressed => "compressed",
                    Which::Original => "original",
                }
            )));
        }
        match (which, session.phase) {
            (Which::Compressed, Phase::Screened | Phase::Rating { .. }) => {}
            (Which::Original, Phase::Reflecting { .. }) => {}
            (Which::Original, _) => {
                return Err(StudyError::OutOfOrder(
                    "the original video is available only after the initial answers".into(),
                ))
            }
            (Which::Compressed, _) => {
                return Err(StudyError::OutOfOrder(
                    "the compressed video can no longer be requested".into(),
                ))
            }
        }
        let path = self.media_path(&session, index, which)?;
        let token = random_hex(&mut lock(&self.ids));
        let event = Event::PlaybackIssued {
            at_ms: now_ms(),
            session_id: session_id.to_string(),
            index,
            which,
            token: token.clone(),
        };
        let mut tokens = lock(&self.tokens);
        self.append(&event)?;
        Self::apply(&mut session, &event)?;
        tokens.insert(
            token.clone(),
            TokenState {
                path,
                consumed_at: None,
                consumed: false,
            },
        );
        Ok(PlaybackGrant {
            index,
            which,
            url: format!("/media/{token}"),
            token,
        })
    }

    /// Authorizes a media fetch. A request starting at byte 0 consumes the
    /// token; later ranges of the same video are served for a limited window
    /// after that first fetch.
    pub fn authorize_media(&self, token: &str, range_start: u64) -> Result<PathBuf> {
        let mut tokens = lock(&self.tokens);
        let state = tokens.get_mut(token).ok_or(StudyError::UnknownToken)?;
        if range_start == 0 {
            if state.consumed {
                return Err(StudyError::TokenConsumed);
            }
            self.append(&Event::PlaybackConsumed {
                at_ms: now_ms(),
                token: token.to_string(),
            })?;
            state.consumed = true;
            state.consumed_at = Some(Instant::now());
            return Ok(state.path.clone());
        }
        if !state.consumed {
            return Err(StudyError::OutOfOrder(
                "the first request for a video must start at byte 0".into(),
            ));
        }
        let window = Duration::from_secs(self.config.continuation_window_secs);
        match state.consumed_at {
            Some(t) if t.elapsed() <= window => Ok(state.path.clone()),
            _ => Err(StudyError::TokenConsumed),
        }
    }

    /// Media file behind a token, without consuming it.
    pub fn peek_media(&self, token: &str) -> Result<PathBuf> {
        lock(&self.tokens)
            .get(token)
            .map(|s| s.path.clone())
            .ok_or(StudyError::UnknownToken)
    }

    fn token_consumed(&self, token: Option<&str>) -> bool {
        let tokens = lock(&self.tokens);
        token.and_then(|t| tokens.get(t)).is_some_and(|s| s.consumed)
    }

    fn items(&self, dims: &[Dimension]) -> BTreeMap<(Dimension, &str), ()> {
        dims.iter()
            .flat_map(|d| {
                self.config.questionnaire.items[d]
                    .iter()
                    .map(move |i| ((*d, i.as_str()), ()))
            })
            .collect()
    }

    fn validate_answers(&self, envelope: &SubmissionEnvelope) -> Result<()> {
        let dims: &[Dimension] = match envelope.phase {
            Stage::Initial => &INITIAL_DIMENSIONS,
            Stage::Reflection => &REFLECTION_DIMENSIONS,
        };
        let required = self.items(dims);
        let mut seen = BTreeSet::new();
        for a in &envelope.answers {
            if !required.contains_key(&(a.dimension, a.item_id.as_str())) {
                return Err(StudyError::Validation(format!(
                    "item `{}` of {} does not belong to this stage",
                    a.item_id, a.dimension
                )));
            }
            if !(1..=5).contains(&a.value) {
                return Err(StudyError::Validation(format!(
                    "value {} for `{}` outside 1..=5",
                    a.value, a.item_id
                )));
            }
            if !seen.insert((a.dimension, a.item_id.as_str())) {
                return Err(StudyError::Validation(format!("item `{}` answered twice", a.item_id)));
            }
        }
        if let Some(((d, item), _)) = required.iter().find(|(k, _)| !seen.contains(*k)) {
            return Err(StudyError::Validation(format!("missing answer for `{item}` ({d})")));
        }
        match (envelope.phase, &envelope.object_check) {
            (Stage::Initial, Some(_)) => Err(StudyError::Validation(
                "object_check belongs to the reflection stage".into(),
            )),
            (Stage::Reflection, None) => Err(StudyError::Validation(
                "object_check is required in the reflection stage".into(),
            )),
            (Stage::Reflection, Some(selected)) => {
                let options = &self.config.questionnaire.object_options;
                let mut unique = BTreeSet::new();
                for s in selected {
                    if !options.contains(s) {
                        return Err(StudyError::Validation(format!("unknown object option `{s}`")));
                    }
                    if !unique.insert(s) {
                        return Err(StudyError::Validation(format!("object option `{s}` selected twice")));
                    }
                }
                Ok(())
            }
            (Stage::Initial, None) => Ok(()),
        }
    }

    pub fn submit(&self, session_id: &str, envelope: &SubmissionEnvelope) -> Result<SessionView> {
        let handle = self.session(session_id)?;
        let mut session = lock(&handle);
        let index = envelope.index;
        if index < session.progress.len() {
            let p = &session.progress[index];
            let recorded = match envelope.phase {
                Stage::Initial => p.initial.is_some(),
                Stage::Reflection => p.reflection.is_some(),
            };
            if recorded {
                return Err(StudyError::Duplicate(format!(
                    "{} answers for scenario {index} were already recorded",
                    match envelope.phase {
                        Stage::Initial => "initial",
                        Stage::Reflection => "reflection",
                    }
                )));
            }
        }
        let (expected, video) = match envelope.phase {
            Stage::Initial => (Phase::Rating { index }, Which::Compressed),
            Stage::Reflection => (Phase::Reflecting { index }, Which::Original),
        };
        if session.phase != expected {
            return Err(StudyError::WrongPhase {
                expected: expected.to_string(),
                actual: session.phase,
            });
        }
        if !self.token_consumed(session.progress[index].token(video)) {
            return Err(StudyError::OutOfOrder(format!(
                "the {} video of scenario {index} has not been played",
                match video {
                    Which::Compressed => "compressed",
                    Which::Original => "original",
                }
            )));
        }
        self.validate_answers(envelope)?;
        let event = Event::SubmissionRecorded {
            at_ms: now_ms(),
            session_id: session_id.to_string(),
            index,
            stage: envelope.phase,
            answers: envelope.answers.clone(),
            object_check: envelope.object_check.clone(),
        };
        self.append(&event)?;
        Self::apply(&mut session, &event)?;
        Ok(Self::view(&session))
    }

    pub fn questionnaire(&self) -> QuestionnaireSchema {
        let list = |dims: &[Dimension]| {
            dims.iter()
                .map(|d| DimensionItems {
                    dimension: *d,
                    items: self.config.questionnaire.items[d].clone(),
                })
                .collect()
        };
        QuestionnaireSchema {
            scale: [1, 5],
            initial: list(&INITIAL_DIMENSIONS),
            reflection: list(&REFLECTION_DIMENSIONS),
            object_options: self.config.questionnaire.object_options.clone(),
        }
    }

    /// Consistent copy of every session, ordered by session id. All session
    /// locks are taken in id order before any is read.
    fn snapshot(&self) -> Vec<Session> {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        let mut handles: Vec<(&String, &Arc<Mutex<Session>>)> = sessions.iter().collect();
        handles.sort_by(|a, b| a.0.cmp(b.0));
        let guards: Vec<MutexGuard<'_, Session>> = handles.iter().map(|(_, h)| lock(h)).collect();
        guards.iter().map(|g| (**g).clone()).collect()
    }

    fn exported_sessions(&self, include_incomplete: bool) -> Vec<Session> {
        self.snapshot()
            .into_iter()
            .filter(|s| include_incomplete || s.is_complete())
            .collect()
    }

    /// Rating export in the shared CSV schema, sorted by participant, asset,
    /// dimension and item so repeated exports are byte-identical.
    pub fn export_ratings(&self, include_incomplete: bool) -> Result<Export> {
        let sessions = self.exported_sessions(include_incomplete);
        let mut records = Vec::new();
        for s in &sessions {
            let pid = participant_id(&s.session_id);
            for (a, p) in s.assignments.iter().zip(&s.progress) {
                let answers: Vec<&Answer> = p.initial.iter().chain(p.reflection.iter()).flatten().collect();
                records.extend(answers.into_iter().map(|ans| RatingRecord {
                    asset_id: a.asset_id.clone(),
                    participant_id: pid.clone(),
                    dimension: ans.dimension,
                    item_id: ans.item_id.clone(),
                    value: ans.value,
                }));
            }
        }
        records.sort_by(|x, y| {
            (&x.participant_id, &x.asset_id, x.dimension, &x.item_id)
                .cmp(&(&y.participant_id, &y.asset_id, y.dimension, &y.item_id))
        });
        let mut csv = Vec::new();
        write_ratings(&records, &mut csv)?;
        let warning = records.is_empty().then(|| {
            if include_incomplete {
                "no ratings recorded yet".to_string()
            } else {
                "no completed sessions; export is empty".to_string()
            }
        });
        if let Some(w) = &warning {
            log::warn!("{w}");
        }
        Ok(Export {
            csv,
            rows: records.len(),
            sessions: sessions.len(),
            warning,
        })
    }

    /// Object-identification outcomes for scenes with configured ground
    /// truth; a check is correct when the selection equals the truth set.
    pub fn export_object_checks(&self, include_incomplete: bool) -> Result<Export> {
        let sessions = self.exported_sessions(include_incomplete);
        let truth = &self.config.questionnaire.object_truth;
        let mut rows = Vec::new();
        let mut unscored = BTreeSet::new();
        for s in &sessions {
            let pid = participant_id(&s.session_id);
            for (a, p) in s.assignments.iter().zip(&s.progress) {
                let Some(selected) = &p.object_check else { continue };
                let Some(expected) = truth.get(&a.content_id) else {
                    unscored.insert(a.content_id.clone());
                    continue;
                };
                let selected: BTreeSet<&String> = selected.iter().collect();
                let expected: BTreeSet<&String> = expected.iter().collect();
                rows.push(ObjectCheck {
                    participant_id: pid.clone(),
                    asset_id: a.asset_id.clone(),
                    correct: selected == expected,
                });
            }
        }
        rows.sort();
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["participant_id", "asset_id", "correct"])
            .map_err(|e| StudyError::Storage(e.to_string()))?;
        for r in &rows {
            writer
                .write_record([r.participant_id.as_str(), r.asset_id.as_str(), if r.correct { "true" } else { "false" }])
                .map_err(|e| StudyError::Storage(e.to_string()))?;
        }
        let csv = writer
            .into_inner()
            .map_err(|e| StudyError::Storage(e.to_string()))?;
        let warning = (!unscored.is_empty()).then(|| {
            format!(
                "no object ground truth for {} scene(s): {}",
                unscored.len(),
                unscored.into_iter().collect::<Vec<_>>().join(", ")
            )
        });
        Ok(Export {
            rows: rows.len(),
            csv,
            sessions: sessions.len(),
            warning,
        })
    }
}
