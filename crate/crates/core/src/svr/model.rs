use serde::{Deserialize, Serialize};

use super::scaler::FeatureScaler;
use super::smo::{rbf_kernel, solve_smo, SmoSolution};
use super::{SvrHyperparams, TrainingSet};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Minimum number of rows accepted by [`train`].
pub const MIN_TRAINING_ROWS: usize = 4;

/// A trained fusion model. Support vectors live in scaled feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub schema_version: u32,
    pub feature_config: FeatureConfig,
    pub scaler: FeatureScaler,
    pub hyperparams: SvrHyperparams,
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub clip_range: [f64; 2],
    /// Solver diagnostics; informational only.
    #[serde(default)]
    pub training: TrainingSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub rows: usize,
    pub iterations: usize,
    pub kkt_violation: f64,
    pub dual_objective: f64,
}

impl SvrModel {
    /// Model that predicts `value` everywhere.
    pub fn constant(value: f64, feature_config: FeatureConfig, dim: usize) -> Self {
        SvrModel {
            schema_version: MODEL_SCHEMA_VERSION,
            feature_config,
            scaler: FeatureScaler {
                min: vec![0.0; dim],
                max: vec![0.0; dim],
            },
            hyperparams: SvrHyperparams::default(),
            support_vectors: Vec::new(),
            coefficients: Vec::new(),
            bias: value,
            clip_range: [0.0, 100.0],
            training: TrainingSummary::default(),
        }
    }

    /// Decision function before clipping, on unscaled features.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.scaler.dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.scaler.dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction input".into()));
        }
        let z = self.scaler.transform(x);
        let gamma = self.hyperparams.gamma;
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, coef)| coef * rbf_kernel(sv, &z, gamma))
            .sum();
        Ok(sum + self.bias)
    }

    pub fn clip(&self, raw: f64) -> f64 {
        raw.clamp(self.clip_range[0], self.clip_range[1])
    }

    /// Clipped prediction on unscaled features of arbitrary dimension.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        self.decision(x).map(|v| self.clip(v))
    }

    /// Predicts a clip score from pooled features computed under
    /// `feature_version`.
    pub fn predict(&self, features: &FeatureVector, feature_version: &str) -> Result<f64> {
        if feature_version != self.feature_config.version {
            return Err(Error::VersionMismatch {
                expected: self.feature_config.version.clone(),
                got: feature_version.to_string(),
            });
        }
        self.predict_raw(&features.to_array())
    }
}

/// Fits a model on arbitrary-dimension points. Used directly for synthetic
/// problems and by [`train`] for pooled clip features.
pub fn train_points(
    points: &[Vec<f64>],
    targets: &[f64],
    params: &SvrHyperparams,
    feature_config: FeatureConfig,
) -> Result<(SvrModel, SmoSolution)> {
    params.validate()?;
    if points.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} points, {} targets",
            points.len(),
            targets.len()
        )));
    }
    if points.len() < MIN_TRAINING_ROWS {
        return Err(Error::Empty(format!(
            "training needs at least {MIN_TRAINING_ROWS} rows, got {}",
            points.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("training labels".into()));
    }
    let scaler = FeatureScaler::fit(points)?;
    let scaled: Vec<Vec<f64>> = points.iter().map(|p| scaler.transform(p)).collect();
    let kernel: Vec<Vec<f64>> = scaled
        .iter()
        .map(|a| scaled.iter().map(|b| rbf_kernel(a, b, params.gamma)).collect())
        .collect();
    let solution = solve_smo(&kernel, targets, params)?;
    let (support_vectors, coefficients) = scaled
        .iter()
        .zip(&solution.beta)
        .filter(|(_, &b)| b != 0.0)
        .map(|(sv, &b)| (sv.clone(), b))
        .unzip();
    let model = SvrModel {
        schema_version: MODEL_SCHEMA_VERSION,
        feature_config,
        scaler,
        hyperparams: *params,
        support_vectors,
        coefficients,
        bias: solution.bias,
        clip_range: [0.0, 100.0],
        training: TrainingSummary {
            rows: points.len(),
            iterations: solution.iterations,
            kkt_violation: solution.violation,
            dual_objective: solution.objective,
        },
    };
    Ok((model, solution))
}

/// Trains the fusion model on pooled clip features. Rows are sorted by clip
/// identifier first, so the result does not depend on input order.
pub fn train(
    set: &TrainingSet,
    params: &SvrHyperparams,
    feature_config: &FeatureConfig,
) -> Result<SvrModel> {
    set.validate()?;
    let rows = set.sorted();
    let points: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.features.to_array().to_vec())
        .collect();
    let targets: Vec<f64> = rows.iter().map(|r| r.label).collect();
    train_points(&points, &targets, params, feature_config.clone()).map(|(m, _)| m)
}

pub fn save_model(model: &SvrModel) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(model)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn load_model(bytes: &[u8]) -> Result<SvrModel> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::Corrupted(e.to_string()))?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corrupted("missing schema_version".into()))?;
    if found != u64::from(MODEL_SCHEMA_VERSION) {
        return Err(Error::SchemaVersion {
            expected: MODEL_SCHEMA_VERSION,
            found: found as u32,
        });
    }
    let model: SvrModel =
        serde_json::from_value(value).map_err(|e| Error::Corrupted(e.to_string()))?;
    let dim = model.scaler.dim();
    let consistent = model.scaler.max.len() == dim
        && model.support_vectors.len() == model.coefficients.len()
        && model.support_vectors.iter().all(|sv| sv.len() == dim)
        && model.clip_range[0] <= model.clip_range[1]
        && model.bias.is_finite();
    if !consistent {
        return Err(Error::Corrupted("inconsistent model dimensions".into()));
    }
    Ok(model)
}
