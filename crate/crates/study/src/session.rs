//! Participant sessions and their forward-only phase machine.

use std::fmt;

use serde::{Deserialize, Serialize};
use teleqa_core::stats::Dimension;

use crate::error::{Result, StudyError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemographicsInput {
    pub age: Option<u32>,
    pub gender: Option<String>,
    pub license: Option<bool>,
    pub years_driving: Option<u32>,
    pub teleop_experience: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub gender: String,
    pub license: bool,
    pub years_driving: u32,
    pub teleop_experience: bool,
}

impl DemographicsInput {
    pub fn complete(&self) -> Result<Demographics> {
        let missing = |field: &str| StudyError::Validation(format!("demographics: `{field}` is required"));
        let age = self.age.ok_or_else(|| missing("age"))?;
        if !(16..=120).contains(&age) {
            return Err(StudyError::Validation(format!("demographics: implausible age {age}")));
        }
        let gender = self
            .gender
            .as_deref()
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .ok_or_else(|| missing("gender"))?
            .to_string();
        let years_driving = self.years_driving.ok_or_else(|| missing("years_driving"))?;
        if years_driving > age {
            return Err(StudyError::Validation(
                "demographics: years_driving exceeds age".into(),
            ));
        }
        Ok(Demographics {
            age,
            gender,
            license: self.license.ok_or_else(|| missing("license"))?,
            years_driving,
            teleop_experience: self
                .teleop_experience
                .ok_or_else(|| missing("teleop_experience"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    ScreenTooSmall,
    Vision,
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectionReason::ScreenTooSmall => "screen_too_small",
            RejectionReason::Vision => "vision",
        })
    }
}

/// Session phase. `Screened` waits for the first playback request, which
/// opens `Rating { index: 0 }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Created,
    Screened,
    Rating { index: usize },
    Reflecting { index: usize },
    Done,
    Rejected { reason: RejectionReason },
}

impl Phase {
    /// Strictly increasing along every legal transition.
    pub fn rank(&self) -> usize {
        match *self {
            Phase::Created => 0,
            Phase::Screened => 1,
            Phase::Rating { index } => 2 + 2 * index,
            Phase::Reflecting { index } => 3 + 2 * index,
            Phase::Done | Phase::Rejected { .. } => usize::MAX,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Done | Phase::Rejected { .. })
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Created => f.write_str("created"),
            Phase::Screened => f.write_str("screened"),
            Phase::Rating { index } => write!(f, "rating({index})"),
            Phase::Reflecting { index } => write!(f, "reflecting({index})"),
            Phase::Done => f.write_str("done"),
            Phase::Rejected { reason } => write!(f, "rejected({reason})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Compressed,
    Original,
}

impl std::str::FromStr for Which {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compressed" => Ok(Which::Compressed),
            "original" => Ok(Which::Original),
            other => Err(StudyError::Validation(format!(
                "unknown video `{other}` (expected compressed or original)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioAssignment {
    pub index: usize,
    pub content_id: String,
    pub asset_id: String,
    pub crf: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub dimension: Dimension,
    pub item_id: String,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionEnvelope {
    pub index: usize,
    pub phase: Stage,
    pub answers: Vec<Answer>,
    #[serde(default)]
    pub object_check: Option<Vec<String>>,
}

/// Progress through one scenario.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioProgress {
    pub compressed_token: Option<String>,
    pub original_token: Option<String>,
    pub initial: Option<Vec<Answer>>,
    pub reflection: Option<Vec<Answer>>,
    pub object_check: Option<Vec<String>>,
}

impl ScenarioProgress {
    pub fn token(&self, which: Which) -> Option<&str> {
        match which {
            Which::Compressed => self.compressed_token.as_deref(),
            Which::Original => self.original_token.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionResult {
    pub ppmm: f64,
    pub landolt_correct: usize,
    pub landolt_total: usize,
    pub ishihara_correct: usize,
    pub ishihara_total: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub seed: u64,
    pub demographics: Demographics,
    pub screen_diagonal: f64,
    pub phase: Phase,
    pub vision: Option<VisionResult>,
    pub assignments: Vec<ScenarioAssignment>,
    pub progress: Vec<ScenarioProgress>,
}

impl Session {
    pub fn new(session_id: String, seed: u64, demographics: Demographics, screen_diagonal: f64) -> Self {
        Session {
            session_id,
            seed,
            demographics,
            screen_diagonal,
            phase: Phase::Created,
            vision: None,
            assignments: Vec::new(),
            progress: Vec::new(),
        }
    }

    /// Moves to `next`; refuses any transition that does not advance.
    pub fn advance(&mut self, next: Phase) -> Result<()> {
        let forward = match (self.phase, next) {
            (Phase::Created, Phase::Screened | Phase::Rejected { .. }) => true,
            (a, b) if a.is_terminal() || b.rank() <= a.rank() => false,
            _ => true,
        };
        if !forward {
            return Err(StudyError::OutOfOrder(format!(
                "cannot move from {} to {next}",
                self.phase
            )));
        }
        self.phase = next;
        Ok(())
    }

    /// Index of the scenario currently being worked on.
    pub fn current_index(&self) -> Option<usize> {
        match self.phase {
            Phase::Screened => Some(0),
            Phase::Rating { index } | Phase::Reflecting { index } => Some(index),
            _ => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Done
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demographics() -> DemographicsInput {
        DemographicsInput {
            age: Some(30),
            gender: Some("female".into()),
            license: Some(true),
            years_driving: Some(10),
            teleop_experience: Some(false),
        }
    }

    #[test]
    fn demographics_require_every_field() {
        assert!(demographics().complete().is_ok());
        let mut d = demographics();
        d.age = None;
        let err = d.complete().unwrap_err().to_string();
        assert!(err.contains("age"), "{err}");
        let mut d = demographics();
        d.gender = Some("  ".into());
        assert!(d.complete().is_err());
    }

    #[test]
    fn phases_only_move_forward() {
        let mut s = Session::new("s".into(), 1, demographics().complete().unwrap(), 27.0);
        s.advance(Phase::Screened).unwrap();
        s.advance(Phase::Rating { index: 0 }).unwrap();
        assert!(s.advance(Phase::Screened).is_err());
        assert!(s.advance(Phase::Rating { index: 0 }).is_err());
        s.advance(Phase::Reflecting { index: 0 }).unwrap();
        assert!(s.advance(Phase::Rating { index: 0 }).is_err());
        s.advance(Phase::Rating { index: 1 }).unwrap();
        s.advance(Phase::Done).unwrap();
        assert!(s.advance(Phase::Rating { index: 2 }).is_err());
    }

    #[test]
    fn phase_json_shape() {
        let v = serde_json::to_value(Phase::Reflecting { index: 3 }).unwrap();
        assert_eq!(v, serde_json::json!({"phase": "reflecting", "index": 3}));
        let v = serde_json::to_value(Phase::Rejected { reason: RejectionReason::Vision }).unwrap();
        assert_eq!(v, serde_json::json!({"phase": "rejected", "reason": "vision"}));
    }
}
