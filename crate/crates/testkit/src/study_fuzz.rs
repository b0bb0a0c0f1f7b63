//! Randomized API-call fuzzing of the study state machine. Each sequence
//! drives a fresh in-memory study with a mix of well-formed, malformed and
//! out-of-order calls, and checks every accepted call against an
//! independent ledger of what has legitimately happened so far.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleqa_core::dataset::{asset_id_for, AssetEntry, Category, DatasetManifest, SceneEntry, CRF_LEVELS};
use teleqa_study::session::ScenarioAssignment;
use teleqa_study::{
    check_assignments, derive_seed, landolt_orientations, Answer, CreateSession, DemographicsInput,
    Orientation, Phase, ScreeningSubmission, Stage, Study, StudyConfig, SubmissionEnvelope, Which,
    SCENARIOS_PER_SESSION,
};

const SECRET: &str = "fuzz";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuzzReport {
    pub sequences: usize,
    pub operations: usize,
    pub accepted: usize,
    pub completed_sessions: usize,
    pub assignments_checked: usize,
    pub violations: Vec<String>,
}

fn fuzz_manifest(scenes: usize) -> DatasetManifest {
    let mut m = DatasetManifest::new(
        (0..scenes)
            .map(|i| SceneEntry {
                content_id: format!("c{i:02}"),
                category: Category::ALL[i % 3],
                reference_path: format!("c{i:02}.mp4").into(),
                duration: 8.0,
                geometry: None,
            })
            .collect(),
    );
    for i in 0..scenes {
        for crf in CRF_LEVELS {
            let content = format!("c{i:02}");
            m.assets.push(AssetEntry {
                asset_id: asset_id_for(&content, crf),
                path: format!("{content}_{crf}.mp4").into(),
                content_id: content,
                crf,
                decoded_path: None,
            });
        }
    }
    m
}

#[derive(Default)]
struct Ledger {
    initial: BTreeSet<(String, usize)>,
    reflection: BTreeSet<(String, usize)>,
    /// Tokens with the session, scenario and video they were granted for.
    grants: BTreeMap<String, (String, usize, Which)>,
    consumed: BTreeSet<String>,
    ranks: BTreeMap<String, usize>,
}

struct Driver<'a> {
    study: &'a Study,
    rng: ChaCha8Rng,
    sessions: Vec<String>,
    tokens: Vec<String>,
    ledger: Ledger,
    report: &'a mut FuzzReport,
    sequence: usize,
}

impl Driver<'_> {
    fn violation(&mut self, message: String) {
        if self.report.violations.len() < 50 {
            self.report
                .violations
                .push(format!("sequence {}: {message}", self.sequence));
        }
    }

    fn pick_session(&mut self) -> Option<String> {
        if self.sessions.is_empty() {
            return None;
        }
        let i = self.rng.random_range(0..self.sessions.len());
        Some(self.sessions[i].clone())
    }

    fn answers(&mut self, stage: Stage, corrupt: bool) -> Vec<Answer> {
        let schema = self.study.questionnaire();
        let dims = match stage {
            Stage::Initial => schema.initial,
            Stage::Reflection => schema.reflection,
        };
        let mut out: Vec<Answer> = dims
            .into_iter()
            .flat_map(|d| {
                d.items.into_iter().map(move |item_id| Answer {
                    dimension: d.dimension,
                    item_id,
                    value: 3,
                })
            })
            .collect();
        for a in &mut out {
            a.value = self.rng.random_range(1..=5);
        }
        if corrupt && !out.is_empty() {
            match self.rng.random_range(0..3) {
                0 => {
                    out.pop();
                }
                1 => out[0].value = [0, 6, 9][self.rng.random_range(0..3)],
                _ => {
                    let d = out[0].clone();
                    out.push(d);
                }
            }
        }
        out
    }

    fn create(&mut self) {
        let diagonal = [20.0, 24.0, 24.9, 25.0, 27.0, 32.0][self.rng.random_range(0..6)];
        let complete = self.rng.random_bool(0.9);
        let request = CreateSession {
            demographics: DemographicsInput {
                age: complete.then_some(30),
                gender: Some("x".into()),
                license: Some(true),
                years_driving: Some(5),
                teleop_experience: Some(false),
            },
            screen_diagonal: Some(diagonal),
        };
        if let Ok(v) = self.study.create_session(&request) {
            self.report.accepted += 1;
            if diagonal < 25.0 || !complete {
                self.violation(format!("session accepted with diagonal {diagonal}, complete {complete}"));
            }
            self.ledger.ranks.insert(v.session_id.clone(), v.phase.rank());
            self.sessions.push(v.session_id);
        }
    }

    fn screen(&mut self, id: &str) {
        let seed = derive_seed(id, SECRET);
        let config = self.study.config();
        let mut landolt = landolt_orientations(seed, config.landolt.rings);
        let mut ishihara: Vec<String> = config.ishihara.plates.iter().map(|p| p.answer.clone()).collect();
        if self.rng.random_bool(0.2) {
            for o in &mut landolt {
                *o = Orientation::ALL[self.rng.random_range(0..8)];
            }
        }
        if self.rng.random_bool(0.1) {
            ishihara.pop();
        }
        let sub = ScreeningSubmission {
            ppmm: if self.rng.random_bool(0.95) { 4.0 } else { 0.5 },
            landolt_answers: landolt,
            ishihara_answers: ishihara,
        };
        if self.study.submit_screening(id, &sub).is_ok() {
            self.report.accepted += 1;
        }
    }

    fn playback(&mut self, id: &str, index: usize, which: Which) {
        let before = self.study.session_view(id).ok();
        match self.study.issue_playback(id, index, which) {
            Ok(g) => {
                self.report.accepted += 1;
                let key = (id.to_string(), index);
                if which == Which::Original && !self.ledger.initial.contains(&key) {
                    self.violation(format!("original of {index} issued before initial answers"));
                }
                if which == Which::Compressed && self.ledger.initial.contains(&key) {
                    self.violation(format!("compressed of {index} issued after initial answers"));
                }
                if self
                    .ledger
                    .grants
                    .values()
                    .any(|(s, i, w)| s == id && *i == index && *w == which)
                {
                    self.violation(format!("second grant for {which:?} video of {index}"));
                }
                if let Some(b) = before {
                    let current = match b.phase {
                        Phase::Screened => Some(0),
                        Phase::Rating { index } | Phase::Reflecting { index } => Some(index),
                        _ => None,
                    };
                    if current != Some(index) {
                        self.violation(format!("playback for {index} granted in phase {}", b.phase));
                    }
                }
                self.ledger.grants.insert(g.token.clone(), (id.to_string(), index, which));
                self.tokens.push(g.token);
            }
            Err(_) => {}
        }
    }

    fn fetch(&mut self) {
        let token = if self.tokens.is_empty() || self.rng.random_bool(0.05) {
            format!("{:032x}", self.rng.random::<u128>())
        } else {
            self.tokens[self.rng.random_range(0..self.tokens.len())].clone()
        };
        let start = if self.rng.random_bool(0.7) { 0 } else { self.rng.random_range(1..1000) };
        if self.study.authorize_media(&token, start).is_ok() {
            self.report.accepted += 1;
            if !self.ledger.grants.contains_key(&token) {
                self.violation(format!("unknown token {token} authorized"));
            }
            if start == 0 {
                if !self.ledger.consumed.insert(token.clone()) {
                    self.violation(format!("token {token} consumed twice"));
                }
            } else if !self.ledger.consumed.contains(&token) {
                self.violation(format!("continuation of unconsumed token {token}"));
            }
        }
    }

    fn submit(&mut self, id: &str, index: usize, stage: Stage, corrupt: bool) {
        let object_check = match stage {
            Stage::Reflection => Some(vec!["car".to_string()]),
            Stage::Initial => None,
        };
        let envelope = SubmissionEnvelope {
            index,
            phase: stage,
            answers: self.answers(stage, corrupt),
            object_check,
        };
        if self.study.submit(id, &envelope).is_ok() {
            self.report.accepted += 1;
            if corrupt {
                self.violation(format!("corrupted {stage:?} submission accepted"));
            }
            let key = (id.to_string(), index);
            let watched_compressed = self.watched(id, index, Which::Compressed);
            let watched_original = self.watched(id, index, Which::Original);
            match stage {
                Stage::Initial => {
                    if !watched_compressed {
                        self.violation(format!("initial answers for {index} before the compressed video"));
                    }
                    if !self.ledger.initial.insert(key) {
                        self.violation(format!("initial answers for {index} recorded twice"));
                    }
                }
                Stage::Reflection => {
                    if !self.ledger.initial.contains(&key) {
                        self.violation(format!("reflection for {index} before initial answers"));
                    }
                    if !watched_original {
                        self.violation(format!("reflection for {index} before the original video"));
                    }
                    if !self.ledger.reflection.insert(key) {
                        self.violation(format!("reflection for {index} recorded twice"));
                    }
                }
            }
        }
    }

    fn watched(&self, id: &str, index: usize, which: Which) -> bool {
        self.ledger.grants.iter().any(|(t, (s, i, w))| {
            s == id && *i == index && *w == which && self.ledger.consumed.contains(t)
        })
    }

    /// The legal next step for a session, so sequences reach deep phases.
    fn advance(&mut self, id: &str) {
        let Ok(view) = self.study.session_view(id) else { return };
        match view.phase {
            Phase::Created => self.screen(id),
            Phase::Screened => self.playback(id, 0, Which::Compressed),
            Phase::Rating { index } | Phase::Reflecting { index } => {
                let (stage, which) = match view.phase {
                    Phase::Rating { .. } => (Stage::Initial, Which::Compressed),
                    _ => (Stage::Reflection, Which::Original),
                };
                let granted = self
                    .ledger
                    .grants
                    .iter()
                    .find(|(_, (s, i, w))| s == id && *i == index && *w == which)
                    .map(|(t, _)| t.clone());
                match granted {
                    None => self.playback(id, index, which),
                    Some(t) if !self.ledger.consumed.contains(&t) => {
                        if self.study.authorize_media(&t, 0).is_ok() {
                            self.report.accepted += 1;
                            self.ledger.consumed.insert(t);
                        }
                    }
                    Some(_) => self.submit(id, index, stage, false),
                }
            }
            Phase::Done | Phase::Rejected { .. } => {}
        }
    }

    fn check_rank(&mut self, id: &str) {
        if let Ok(v) = self.study.session_view(id) {
            let rank = v.phase.rank();
            let previous = self.ledger.ranks.insert(id.to_string(), rank).unwrap_or(0);
            if rank < previous {
                self.violation(format!("session moved backwards to {}", v.phase));
            }
        }
    }

    fn step(&mut self) {
        self.report.operations += 1;
        let op = self.rng.random_range(0..100);
        let session = self.pick_session();
        match (op, session) {
            (0..=7, _) | (_, None) => self.create(),
            (8..=9, Some(id)) => {
                for _ in 0..80 {
                    self.advance(&id);
                    self.check_rank(&id);
                }
            }
            (10..=47, Some(id)) => {
                self.advance(&id);
                self.check_rank(&id);
            }
            (48..=55, Some(id)) => {
                self.screen(&id);
                self.check_rank(&id);
            }
            (56..=70, Some(id)) => {
                let index = self.rng.random_range(0..SCENARIOS_PER_SESSION + 2);
                let which = if self.rng.random_bool(0.5) { Which::Compressed } else { Which::Original };
                self.playback(&id, index, which);
                self.check_rank(&id);
            }
            (71..=82, _) => self.fetch(),
            (_, Some(id)) => {
                let index = self.rng.random_range(0..SCENARIOS_PER_SESSION + 1);
                let stage = if self.rng.random_bool(0.5) { Stage::Initial } else { Stage::Reflection };
                let corrupt = self.rng.random_bool(0.3);
                self.submit(&id, index, stage, corrupt);
                self.check_rank(&id);
            }
        }
    }
}

/// Runs `sequences` independent fuzz sequences derived from `seed`.
pub fn run_study_fuzz(sequences: usize, seed: u64) -> FuzzReport {
    let mut report = FuzzReport::default();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    for sequence in 0..sequences {
        let scenes = master.random_range(SCENARIOS_PER_SESSION..SCENARIOS_PER_SESSION + 8);
        let mut config = StudyConfig::default();
        config.secret = Some(SECRET.into());
        let study = Study::in_memory(config, fuzz_manifest(scenes), master.random())
            .expect("fuzz manifest is valid");
        let steps = master.random_range(20..160);
        let mut driver = Driver {
            study: &study,
            rng: ChaCha8Rng::seed_from_u64(master.random()),
            sessions: Vec::new(),
            tokens: Vec::new(),
            ledger: Ledger::default(),
            report: &mut report,
            sequence,
        };
        for _ in 0..steps {
            driver.step();
        }
        let sessions = driver.sessions.clone();
        let reflections = driver.ledger.reflection.len();
        let initials = driver.ledger.initial.len();
        for id in &sessions {
            if study.session_view(id).is_ok_and(|v| v.phase == Phase::Done) {
                driver.report.completed_sessions += 1;
            }
        }
        for line in study.log_lines() {
            let Ok(v) = serde_json::from_str::<serde_json::Value>(&line) else {
                driver.violation("unparseable log line".into());
                continue;
            };
            if v["event"] == "screening_recorded" && v["outcome"]["phase"] == "screened" {
                let a: Vec<ScenarioAssignment> =
                    serde_json::from_value(v["assignments"].clone()).unwrap_or_default();
                driver.report.assignments_checked += 1;
                if let Err(e) = check_assignments(&a, SCENARIOS_PER_SESSION) {
                    driver.violation(format!("assignment constraint: {e}"));
                }
            }
        }
        match study.export_ratings(true) {
            Ok(export) => {
                let schema = study.questionnaire();
                let per = |d: &[teleqa_study::service::DimensionItems]| d.iter().map(|x| x.items.len()).sum::<usize>();
                let expected = initials * per(&schema.initial) + reflections * per(&schema.reflection);
                if export.rows != expected {
                    driver.violation(format!("export has {} rows, ledger expects {expected}", export.rows));
                }
            }
            Err(e) => driver.violation(format!("export failed: {e}")),
        }
        report.sequences += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_fuzz_run_is_clean_and_reaches_completion() {
        let r = run_study_fuzz(300, 1);
        assert!(r.violations.is_empty(), "{:#?}", r.violations);
        assert!(r.completed_sessions > 0, "{r:?}");
        assert!(r.assignments_checked > 0);
    }
}
