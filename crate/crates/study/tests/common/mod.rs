#![allow(dead_code)]

use std::path::Path;

use teleqa_core::dataset::{asset_id_for, AssetEntry, Category, DatasetManifest, SceneEntry, CRF_LEVELS};
use teleqa_core::stats::Dimension;
use teleqa_study::{
    derive_seed, landolt_orientations, Answer, CreateSession, DemographicsInput, Stage, Study,
    StudyConfig, SubmissionEnvelope, ScreeningSubmission, Which,
};

pub const SECRET: &str = "fixture-secret";
pub const OPERATOR: &str = "operator-token";

/// `scenes` scenes with all four compression levels; media files are
/// written under `root` when given.
pub fn manifest(scenes: usize, root: Option<&Path>) -> DatasetManifest {
    let mut m = DatasetManifest::new(
        (0..scenes)
            .map(|i| SceneEntry {
                content_id: format!("scene{i:02}"),
                category: Category::ALL[i % 3],
                reference_path: format!("scene{i:02}_ref.mp4").into(),
                duration: 8.0,
                geometry: None,
            })
            .collect(),
    );
    for i in 0..scenes {
        let content = format!("scene{i:02}");
        for crf in CRF_LEVELS {
            let asset_id = asset_id_for(&content, crf);
            m.assets.push(AssetEntry {
                path: format!("{asset_id}.mp4").into(),
                asset_id,
                content_id: content.clone(),
                crf,
                decoded_path: None,
            });
        }
    }
    if let Some(root) = root {
        for s in &m.scenes {
            std::fs::write(root.join(&s.reference_path), media_bytes(&s.content_id)).unwrap();
        }
        for a in &m.assets {
            std::fs::write(root.join(&a.path), media_bytes(&a.asset_id)).unwrap();
        }
    }
    m
}

pub fn media_bytes(id: &str) -> Vec<u8> {
    (0..1000u32).map(|i| (i as u8) ^ id.len() as u8).collect()
}

pub fn config(root: &Path) -> StudyConfig {
    let mut c = StudyConfig::default();
    c.secret = Some(SECRET.into());
    c.operator_token = Some(OPERATOR.into());
    c.media_root = root.to_path_buf();
    c.manifest = root.join("manifest.json");
    c.log_path = root.join("log.jsonl");
    c
}

pub fn demographics() -> DemographicsInput {
    DemographicsInput {
        age: Some(34),
        gender: Some("male".into()),
        license: Some(true),
        years_driving: Some(15),
        teleop_experience: Some(true),
    }
}

pub fn create_request(diagonal: f64) -> CreateSession {
    CreateSession {
        demographics: demographics(),
        screen_diagonal: Some(diagonal),
    }
}

pub fn passing_screening(study: &Study, session_id: &str) -> ScreeningSubmission {
    let config = study.config();
    ScreeningSubmission {
        ppmm: 3.97,
        landolt_answers: landolt_orientations(derive_seed(session_id, SECRET), config.landolt.rings),
        ishihara_answers: config.ishihara.plates.iter().map(|p| p.answer.clone()).collect(),
    }
}

pub fn answers(study: &Study, stage: Stage, value: u8) -> Vec<Answer> {
    let schema = study.questionnaire();
    let dims = match stage {
        Stage::Initial => schema.initial,
        Stage::Reflection => schema.reflection,
    };
    dims.into_iter()
        .flat_map(|d| {
            d.items.into_iter().map(move |item_id| Answer {
                dimension: d.dimension,
                item_id,
                value,
            })
        })
        .collect()
}

pub fn envelope(study: &Study, index: usize, stage: Stage, value: u8) -> SubmissionEnvelope {
    SubmissionEnvelope {
        index,
        phase: stage,
        answers: answers(study, stage, value),
        object_check: (stage == Stage::Reflection).then(|| vec!["car".to_string()]),
    }
}

/// Runs scenarios `from..to` of a screened session through the full flow.
pub fn complete_scenarios(study: &Study, id: &str, from: usize, to: usize) {
    for i in from..to {
        let g = study.issue_playback(id, i, Which::Compressed).unwrap();
        study.authorize_media(&g.token, 0).unwrap();
        study.submit(id, &envelope(study, i, Stage::Initial, 1 + (i % 5) as u8)).unwrap();
        let g = study.issue_playback(id, i, Which::Original).unwrap();
        study.authorize_media(&g.token, 0).unwrap();
        study.submit(id, &envelope(study, i, Stage::Reflection, 3)).unwrap();
    }
}

pub fn item_count(dims: &[Dimension], study: &Study) -> usize {
    dims.iter().map(|d| study.config().questionnaire.items[d].len()).sum()
}
