//! Epsilon-SVR fusion of pooled clip features into a 0-100 quality score.
//!
//! Training rows are sorted by clip identifier before fitting, scaled into
//! the unit box with a min/max [`FeatureScaler`], and fed to an SMO solver
//! over the dual with an RBF kernel.

mod baseline;
mod grid;
mod model;
mod scaler;
mod smo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub use baseline::{
    baseline_anchor, baseline_hyperparams, baseline_model, baseline_training_set, train_baseline,
};
pub use grid::{grid_search, scene_folds, GridPoint, GridResult, HyperGrid};
pub use model::{load_model, save_model, train, train_points, SvrModel, MODEL_SCHEMA_VERSION};
pub use scaler::{fit_scaler, FeatureScaler};
pub use smo::{dual_objective, rbf_kernel, solve_smo, SmoSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrHyperparams {
    /// RBF width: `k(a, b) = exp(-gamma * |a - b|^2)`.
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
    /// Stop when the maximal KKT violation falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvrHyperparams {
    fn default() -> Self {
        SvrHyperparams {
            gamma: 1.0,
            c: 16.0,
            epsilon: 1.0,
            tolerance: 1e-6,
            max_iterations: 1_000_000,
        }
    }
}

impl SvrHyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.c > 0.0
            && self.epsilon >= 0.0
            && self.tolerance > 0.0
            && self.gamma.is_finite()
            && self.c.is_finite()
            && self.epsilon.is_finite()
            && self.max_iterations > 0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "SVR hyperparameters out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub clip_id: String,
    /// Source scene, needed for scene-disjoint folds.
    pub scene: Option<String>,
    pub features: FeatureVector,
    pub label: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub rows: Vec<TrainingRow>,
}

impl TrainingSet {
    pub fn new(rows: Vec<TrainingRow>) -> Result<Self> {
        let set = TrainingSet { rows };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for row in &self.rows {
            if !seen.insert(row.clip_id.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate clip id `{}` in training set",
                    row.clip_id
                )));
            }
            if !row.features.is_finite() {
                return Err(Error::NonFinite(format!("features of `{}`", row.clip_id)));
            }
            if !row.label.is_finite() {
                return Err(Error::NonFinite(format!("label of `{}`", row.clip_id)));
            }
            if !(0.0..=100.0).contains(&row.label) {
                return Err(Error::InvalidParameter(format!(
                    "label {} of `{}` outside [0, 100]",
                    row.label, row.clip_id
                )));
            }
        }
        Ok(())
    }

    /// Rows in clip-identifier order.
    pub fn sorted(&self) -> Vec<&TrainingRow> {
        let mut rows: Vec<&TrainingRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        rows
    }

    pub fn subset(&self, keep: impl Fn(&TrainingRow) -> bool) -> TrainingSet {
        TrainingSet {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}
