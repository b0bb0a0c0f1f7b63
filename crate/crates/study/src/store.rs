//! Append-only record log: one JSON event per line. The in-memory state is
//! rebuilt by replaying the log at startup.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};
use crate::session::{Answer, Demographics, Phase, ScenarioAssignment, Stage, VisionResult, Which};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        at_ms: u64,
        session_id: String,
        seed: u64,
        demographics: Demographics,
        screen_diagonal: f64,
    },
    ScreeningRecorded {
        at_ms: u64,
        session_id: String,
        vision: VisionResult,
        outcome: Phase,
        assignments: Vec<ScenarioAssignment>,
    },
    PlaybackIssued {
        at_ms: u64,
        session_id: String,
        index: usize,
        which: Which,
        token: String,
    },
    PlaybackConsumed {
        at_ms: u64,
        token: String,
    },
    SubmissionRecorded {
        at_ms: u64,
        session_id: String,
        index: usize,
        stage: Stage,
        answers: Vec<Answer>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object_check: Option<Vec<String>>,
    },
}

enum Sink {
    File { path: PathBuf, file: File },
    Memory(Vec<String>),
}

/// Serialized append channel. Every event is flushed before the caller
/// applies it to the in-memory state.
pub struct EventLog {
    sink: Sink,
}

impl EventLog {
    /// Opens (creating if needed) a log file and returns it with the events
    /// already recorded.
    pub fn open(path: &Path) -> Result<(Self, Vec<Event>)> {
        let mut events = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event = serde_json::from_str(&line).map_err(|e| {
                    StudyError::Storage(format!("{}:{}: {e}", path.display(), n + 1))
                })?;
                events.push(event);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            EventLog {
                sink: Sink::File {
                    path: path.to_path_buf(),
                    file,
                },
            },
            events,
        ))
    }

    pub fn in_memory() -> Self {
        EventLog {
            sink: Sink::Memory(Vec::new()),
        }
    }

    pub fn append(&mut self, event: &Event) -> Result<()> {
        let line = serde_json::to_string(event)?;
        match &mut self.sink {
            Sink::File { path, file } => {
                writeln!(file, "{line}")
                    .and_then(|_| file.flush())
                    .map_err(|e| StudyError::Storage(format!("{}: {e}", path.display())))?;
            }
            Sink::Memory(lines) => lines.push(line),
        }
        Ok(())
    }

    /// Lines appended to an in-memory log.
    pub fn memory_lines(&self) -> Option<&[String]> {
        match &self.sink {
            Sink::Memory(lines) => Some(lines),
            Sink::File { .. } => None,
        }
    }
}
