//! Desk-scale retraining harness: synthetic scenes with monotone labels,
//! scene-disjoint split, grid-searched retraining, and comparison against
//! the frozen baseline. Also writes the same data to disk as a fixture for
//! command-line tests.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use teleqa_core::alignment::{evaluate, AlignmentReport};
use teleqa_core::dataset::{
    asset_id_for, split_by_scene, AssetEntry, DatasetManifest, SceneEntry, SplitResult, CRF_LEVELS,
};
use teleqa_core::features::{extract_clip_features, FeatureConfig};
use teleqa_core::stats::{write_ratings, Dimension, RatingRecord};
use teleqa_core::svr::{
    baseline_model, grid_search, scene_folds, train, HyperGrid, SvrHyperparams, SvrModel,
    TrainingRow, TrainingSet,
};

use crate::synth::{desk_dataset, likert_answers, DeskConfig, DeskScene};

pub const DESK_TRAIN_FRACTION: f64 = 0.8;
pub const DESK_FOLDS: usize = 3;

/// Severity `k` (1-based) is stored under the k-th CRF level.
pub fn desk_crf(severity: usize) -> u32 {
    CRF_LEVELS[severity - 1]
}

pub fn desk_manifest(scenes: &[DeskScene], root: &Path) -> DatasetManifest {
    let mut manifest = DatasetManifest::new(
        scenes
            .iter()
            .map(|s| SceneEntry {
                content_id: s.content_id.clone(),
                category: s.category,
                reference_path: root.join(format!("{}.y4m", s.content_id)),
                duration: s.reference.len() as f64 / s.reference.frame_rate().as_f64(),
                geometry: None,
            })
            .collect(),
    );
    for s in scenes {
        for v in &s.variants {
            let asset_id = asset_id_for(&s.content_id, desk_crf(v.severity));
            manifest.assets.push(AssetEntry {
                path: root.join(format!("{asset_id}.y4m")),
                asset_id,
                content_id: s.content_id.clone(),
                crf: desk_crf(v.severity),
                decoded_path: None,
            });
        }
    }
    manifest
}

/// Pooled features and noisy labels for every distorted clip.
pub fn desk_training_set(scenes: &[DeskScene], config: &FeatureConfig) -> TrainingSet {
    let mut rows = Vec::new();
    for s in scenes {
        for v in &s.variants {
            let features = extract_clip_features(&s.reference, &v.clip, config)
                .expect("desk clips are well formed");
            rows.push(TrainingRow {
                clip_id: asset_id_for(&s.content_id, desk_crf(v.severity)),
                scene: Some(s.content_id.clone()),
                features: features.pooled,
                label: v.mos,
            });
        }
    }
    TrainingSet { rows }
}

#[derive(Debug, Clone)]
pub struct DeskOutcome {
    pub split: SplitResult,
    pub hyperparams: SvrHyperparams,
    pub model: SvrModel,
    pub baseline: AlignmentReport,
    pub retrained: AlignmentReport,
}

impl DeskOutcome {
    /// Relative validation RMSE reduction of the retrained model.
    pub fn rmse_gain(&self) -> f64 {
        (self.baseline.rmse - self.retrained.rmse) / self.baseline.rmse
    }
}

fn predictions(model: &SvrModel, set: &TrainingSet) -> BTreeMap<String, f64> {
    set.rows
        .iter()
        .map(|r| {
            let p = model
                .predict(&r.features, &model.feature_config.version)
                .expect("finite features");
            (r.clip_id.clone(), p)
        })
        .collect()
}

/// Generates the desk dataset, splits it by scene, grid-searches the SVR on
/// the training scenes, and evaluates both the retrained model and the
/// frozen baseline on the held-out scenes.
pub fn run_desk_experiment(config: &DeskConfig, seed: u64) -> DeskOutcome {
    let scenes = desk_dataset(config, seed);
    let manifest = desk_manifest(&scenes, Path::new("."));
    let split = split_by_scene(&manifest, DESK_TRAIN_FRACTION, seed).expect("desk split");
    let feature_config = FeatureConfig::default();
    let all = desk_training_set(&scenes, &feature_config);
    let train_set = all.subset(|r| split.is_train(r.scene.as_deref().unwrap_or_default()));
    let val_set = all.subset(|r| !split.is_train(r.scene.as_deref().unwrap_or_default()));
    let folds = scene_folds(&train_set, DESK_FOLDS, seed).expect("folds");
    let search = grid_search(&train_set, &folds, &HyperGrid::default(), &feature_config)
        .expect("grid search");
    let model = train(&train_set, &search.best, &feature_config).expect("retraining");
    let labels: BTreeMap<String, f64> = val_set
        .rows
        .iter()
        .map(|r| (r.clip_id.clone(), r.label))
        .collect();
    let retrained = evaluate(&predictions(&model, &val_set), &labels).expect("evaluate");
    let baseline = evaluate(&predictions(&baseline_model(), &val_set), &labels).expect("evaluate");
    DeskOutcome {
        split,
        hyperparams: search.best,
        model,
        baseline,
        retrained,
    }
}

/// Items per questionnaire dimension in generated rating exports.
pub const DESK_ITEMS: usize = 3;

#[derive(Debug, Clone)]
pub struct DeskFixture {
    pub root: PathBuf,
    pub manifest_path: PathBuf,
    pub ratings_path: PathBuf,
    pub manifest: DatasetManifest,
}

/// Writes reference and distorted clips as Y4M, a manifest, and a rating
/// export whose per-asset MOS approximates the desk label.
pub fn write_desk_fixture(
    root: &Path,
    config: &DeskConfig,
    seed: u64,
    raters: usize,
) -> io::Result<DeskFixture> {
    fs::create_dir_all(root)?;
    let scenes = desk_dataset(config, seed);
    let manifest = desk_manifest(&scenes, root);
    let mut records = Vec::new();
    for s in &scenes {
        let mut f = fs::File::create(root.join(format!("{}.y4m", s.content_id)))?;
        s.reference.write_y4m(&mut f)?;
        for v in &s.variants {
            let asset_id = asset_id_for(&s.content_id, desk_crf(v.severity));
            let mut f = fs::File::create(root.join(format!("{asset_id}.y4m")))?;
            v.clip.write_y4m(&mut f)?;
            for (d, dim) in Dimension::ALL.iter().enumerate() {
                let answers = likert_answers(v.mos, raters, DESK_ITEMS, seed ^ (d as u64 * 7919));
                for (p, row) in answers.iter().enumerate() {
                    for (i, &value) in row.iter().enumerate() {
                        records.push(RatingRecord {
                            asset_id: asset_id.clone(),
                            participant_id: format!("p{p:03}"),
                            dimension: *dim,
                            item_id: format!("{}_{}", dim.as_str(), i + 1),
                            value,
                        });
                    }
                }
            }
        }
    }
    let manifest_path = root.join("manifest.json");
    fs::write(&manifest_path, manifest.to_json().map_err(io::Error::other)?)?;
    let ratings_path = root.join("ratings.csv");
    let file = fs::File::create(&ratings_path)?;
    write_ratings(&records, file).map_err(io::Error::other)?;
    Ok(DeskFixture {
        root: root.to_path_buf(),
        manifest_path,
        ratings_path,
        manifest,
    })
}
