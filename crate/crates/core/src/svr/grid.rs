use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::train;
use super::{SvrHyperparams, TrainingSet};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;

/// Cartesian grid over `(C, gamma, epsilon)`; solver settings come from
/// `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub base: SvrHyperparams,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            c: vec![1.0, 4.0, 16.0, 64.0],
            gamma: vec![0.25, 0.5, 1.0, 2.0],
            epsilon: vec![1.0, 2.5],
            base: SvrHyperparams::default(),
        }
    }
}

impl HyperGrid {
    /// Grid points ordered by C, then gamma, then epsilon (ascending).
    pub fn points(&self) -> Vec<SvrHyperparams> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let mut out = Vec::new();
        for &c in &sorted(&self.c) {
            for &gamma in &sorted(&self.gamma) {
                for &epsilon in &sorted(&self.epsilon) {
                    out.push(SvrHyperparams {
                        c,
                        gamma,
                        epsilon,
                        ..self.base
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparams: SvrHyperparams,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: SvrHyperparams,
    pub points: Vec<GridPoint>,
}

/// Splits the scenes of a training set into `k` folds after a seeded
/// shuffle. Each fold is a set of validation scenes.
pub fn scene_folds(set: &TrainingSet, k: usize, seed: u64) -> Result<Vec<BTreeSet<String>>> {
    let scenes: BTreeSet<&str> = set
        .rows
        .iter()
        .map(|r| {
            r.scene
                .as_deref()
                .ok_or_else(|| Error::Split(format!("row `{}` has no scene", r.clip_id)))
        })
        .collect::<Result<_>>()?;
    if k < 2 || scenes.len() < k {
        return Err(Error::Split(format!(
            "cannot build {k} folds from {} scenes",
            scenes.len()
        )));
    }
    let mut scenes: Vec<&str> = scenes.into_iter().collect();
    scenes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![BTreeSet::new(); k];
    for (i, s) in scenes.into_iter().enumerate() {
        folds[i % k].insert(s.to_string());
    }
    Ok(folds)
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), (p, y)| (s + (p - y) * (p - y), n + 1));
    (sum / n as f64).sqrt()
}

/// Scores every grid point by mean validation RMSE over scene-disjoint folds
/// and returns the minimizer. Ties go to the smaller C, then smaller gamma.
pub fn grid_search(
    set: &TrainingSet,
    folds: &[BTreeSet<String>],
    grid: &HyperGrid,
    feature_config: &FeatureConfig,
) -> Result<GridResult> {
    if folds.len() < 2 {
        return Err(Error::Split("grid search needs at least two folds".into()));
    }
    let mut splits = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let mut train_rows = Vec::new();
        let mut val_rows = Vec::new();
        for row in &set.rows {
            let scene = row
                .scene
                .as_deref()
                .ok_or_else(|| Error::Split(format!("row `{}` has no scene", row.clip_id)))?;
            if fold.contains(scene) {
                val_rows.push(row.clone());
            } else {
                train_rows.push(row.clone());
            }
        }
        if val_rows.is_empty() {
            return Err(Error::Split(format!("fold {f} has no validation rows")));
        }
        if train_rows.is_empty() {
            return Err(Error::Split(format!("fold {f} leaves no training rows")));
        }
        splits.push((
            TrainingSet { rows: train_rows },
            TrainingSet { rows: val_rows },
        ));
    }
    // Folds are defined on scenes, so scene-disjointness holds by
    // construction; duplicates across folds are still rejected.
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (f, fold) in folds.iter().enumerate() {
        for s in fold {
            if let Some(prev) = owner.insert(s, f) {
                return Err(Error::Split(format!("scene `{s}` in folds {prev} and {f}")));
            }
        }
    }

    let candidates = grid.points();
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    let points: Vec<GridPoint> = candidates
        .par_iter()
        .map(|hp| -> Result<GridPoint> {
            let fold_rmse = splits
                .par_iter()
                .map(|(train_set, val_set)| {
                    let model = train(train_set, hp, feature_config)?;
                    let pairs = val_set
                        .rows
                        .iter()
                        .map(|r| {
                            model
                                .predict(&r.features, &feature_config.version)
                                .map(|p| (p, r.label))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(rmse(pairs.into_iter()))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean_rmse = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
            Ok(GridPoint {
                hyperparams: *hp,
                fold_rmse,
                mean_rmse,
            })
        })
        .collect::<Result<_>>()?;

    // Candidates are already in (C, gamma, epsilon) order; only a strictly
    // smaller error displaces the incumbent.
    let best = points
        .iter()
        .fold(None::<&GridPoint>, |best, p| match best {
            Some(b) if b.mean_rmse <= p.mean_rmse => Some(b),
            _ => Some(p),
        })
        .expect("nonempty grid");
    Ok(GridResult {
        best: best.hyperparams,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::svr::TrainingRow;

    fn row(id: &str, scene: &str, x: f64, label: f64) -> TrainingRow {
        TrainingRow {
            clip_id: id.into(),
            scene: Some(scene.into()),
            features: FeatureVector {
                vif: [x; 4],
                dlm: x,
                motion: 1.0,
            },
            label,
        }
    }

    fn linear_set() -> TrainingSet {
        let mut rows = Vec::new();
        for s in 0..6 {
            for k in 0..4 {
                let x = (s * 4 + k) as f64 / 24.0;
                rows.push(row(&format!("s{s}_{k}"), &format!("s{s}"), x, 80.0 * x + 10.0));
            }
        }
        TrainingSet { rows }
    }

    #[test]
    fn single_point_grid() {
        let set = linear_set();
        let folds = scene_folds(&set, 3, 1).unwrap();
        let grid = HyperGrid {
            c: vec![8.0],
            gamma: vec![0.5],
            epsilon: vec![1.0],
            base: SvrHyperparams::default(),
        };
        let r = grid_search(&set, &folds, &grid, &FeatureConfig::default()).unwrap();
        assert_eq!((r.best.c, r.best.gamma, r.best.epsilon), (8.0, 0.5, 1.0));
    }

    #[test]
    fn ties_prefer_smaller_c() {
        // Constant labels: every grid point predicts them exactly.
        let mut set = linear_set();
        for r in &mut set.rows {
            r.label = 50.0;
        }
        let folds = scene_folds(&set, 2, 4).unwrap();
        let grid = HyperGrid {
            c: vec![10.0, 1.0],
            gamma: vec![1.0],
            epsilon: vec![1.0],
            base: SvrHyperparams::default(),
        };
        let r = grid_search(&set, &folds, &grid, &FeatureConfig::default()).unwrap();
        assert_eq!(r.points[0].mean_rmse, r.points[1].mean_rmse);
        assert_eq!((r.best.c, r.best.gamma), (1.0, 1.0));
    }

    #[test]
    fn folds_are_scene_disjoint() {
        let set = linear_set();
        let folds = scene_folds(&set, 3, 9).unwrap();
        let all: Vec<&String> = folds.iter().flatten().collect();
        let unique: BTreeSet<&String> = all.iter().copied().collect();
        assert_eq!(all.len(), unique.len());
        assert_eq!(unique.len(), 6);
    }

    #[test]
    fn empty_fold_is_rejected() {
        let set = linear_set();
        let folds = vec![
            BTreeSet::from(["s0".to_string()]),
            BTreeSet::from(["nope".to_string()]),
        ];
        assert!(matches!(
            grid_search(&set, &folds, &HyperGrid::default(), &FeatureConfig::default()),
            Err(Error::Split(_))
        ));
        assert!(grid_search(&set, &folds[..1], &HyperGrid::default(), &FeatureConfig::default()).is_err());
    }
}
