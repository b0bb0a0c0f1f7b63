//! Frozen default-weight fusion model used as the reference point for
//! retraining. It is an SVR fitted to a fixed anchor surface
//! `100 * (0.6 * dlm + 0.4 * vif0)` over a regular grid of feature values,
//! so it encodes a generic detail/fidelity trade-off and no human ratings.

use super::model::{load_model, train, SvrModel};
use super::{SvrHyperparams, TrainingRow, TrainingSet};
use crate::error::Result;
use crate::features::{FeatureConfig, FeatureVector};

const BASELINE_JSON: &str = include_str!("baseline_model.json");

/// Grid resolution of the anchor surface along each axis.
pub const BASELINE_GRID: usize = 11;

pub fn baseline_hyperparams() -> SvrHyperparams {
    SvrHyperparams {
        gamma: 0.5,
        c: 64.0,
        epsilon: 1.0,
        tolerance: 1e-6,
        max_iterations: 1_000_000,
    }
}

pub fn baseline_anchor(dlm: f64, vif0: f64) -> f64 {
    100.0 * (0.6 * dlm + 0.4 * vif0)
}

/// Anchor rows: every VIF scale equals `vif0`, motion is zero.
pub fn baseline_training_set() -> TrainingSet {
    let step = 1.0 / (BASELINE_GRID - 1) as f64;
    let mut rows = Vec::with_capacity(BASELINE_GRID * BASELINE_GRID);
    for i in 0..BASELINE_GRID {
        for j in 0..BASELINE_GRID {
            let dlm = i as f64 * step;
            let vif = j as f64 * step;
            rows.push(TrainingRow {
                clip_id: format!("anchor_{i:02}_{j:02}"),
                scene: None,
                features: FeatureVector {
                    vif: [vif; 4],
                    dlm,
                    motion: 0.0,
                },
                label: baseline_anchor(dlm, vif),
            });
        }
    }
    TrainingSet { rows }
}

/// Refits the baseline from its anchor surface.
pub fn train_baseline() -> Result<SvrModel> {
    train(
        &baseline_training_set(),
        &baseline_hyperparams(),
        &FeatureConfig::default(),
    )
}

/// The frozen baseline shipped with the library.
pub fn baseline_model() -> SvrModel {
    load_model(BASELINE_JSON.as_bytes()).expect("embedded baseline model is valid")
}
