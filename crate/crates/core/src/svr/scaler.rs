use serde::{Deserialize, Serialize};

use super::TrainingSet;
use crate::error::{Error, Result};

/// Per-feature min/max observed on the training set. Constant features map
/// to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Empty("cannot fit a scaler on no rows".into()))?;
        let dim = first.len();
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row of {} features, expected {dim}",
                    p.len()
                )));
            }
            for (k, &v) in p.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite("scaler input".into()));
                }
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(FeatureScaler { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.5
                }
            })
            .collect()
    }
}

/// Fits the scaler on the pooled feature vectors of a training set.
pub fn fit_scaler(set: &TrainingSet) -> Result<FeatureScaler> {
    let points: Vec<Vec<f64>> = set
        .rows
        .iter()
        .map(|r| r.features.to_array().to_vec())
        .collect();
    FeatureScaler::fit(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Vec<f64> {
        let pts: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let s = FeatureScaler::fit(&pts).unwrap();
        pts.iter().map(|p| s.transform(p)[0]).collect()
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(column(&[0.2, 0.8]), vec![0.0, 1.0]);
        assert_eq!(column(&[0.5, 0.5, 0.5]), vec![0.5, 0.5, 0.5]);
        assert_eq!(column(&[1.0, 2.0, 3.0]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(matches!(
            fit_scaler(&TrainingSet::default()),
            Err(Error::Empty(_))
        ));
    }
}
