//! Constrained scenario randomization.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teleqa_core::dataset::{DatasetManifest, CRF_LEVELS};

use crate::error::{Result, StudyError};
use crate::session::ScenarioAssignment;

/// A scene offered to participants, with its asset per compression level
/// (in [`CRF_LEVELS`] order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EligibleScene {
    pub content_id: String,
    pub assets: [String; 4],
}

/// Scenes that have every compression level, sorted by content id.
pub fn eligible_scenes(manifest: &DatasetManifest) -> Vec<EligibleScene> {
    let mut out: Vec<EligibleScene> = manifest
        .scenes
        .iter()
        .filter_map(|scene| {
            let mut assets: [Option<String>; 4] = Default::default();
            for a in &manifest.assets {
                if a.content_id == scene.content_id {
                    if let Some(k) = CRF_LEVELS.iter().position(|&c| c == a.crf) {
                        assets[k] = Some(a.asset_id.clone());
                    }
                }
            }
            let [a, b, c, d] = assets;
            Some(EligibleScene {
                content_id: scene.content_id.clone(),
                assets: [a?, b?, c?, d?],
            })
        })
        .collect();
    out.sort_by(|a, b| a.content_id.cmp(&b.content_id));
    out
}

/// Draws `count` distinct scenes in random order, then places each
/// compression level once on random distinct positions and fills the rest
/// with uniform draws. Deterministic in `seed`.
pub fn assign_scenarios(
    scenes: &[EligibleScene],
    count: usize,
    seed: u64,
) -> Result<Vec<ScenarioAssignment>> {
    if count < CRF_LEVELS.len() {
        return Err(StudyError::Config(format!(
            "{count} scenarios cannot cover {} compression levels",
            CRF_LEVELS.len()
        )));
    }
    if scenes.len() < count {
        return Err(StudyError::ManifestTooSmall {
            eligible: scenes.len(),
            required: count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    for i in 0..count {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }
    let chosen = order[..count].iter().map(|&i| &scenes[i]);
    let mut positions: Vec<usize> = (0..count).collect();
    positions.shuffle(&mut rng);
    let mut level = vec![0usize; count];
    for (k, &p) in positions.iter().enumerate() {
        level[p] = if k < CRF_LEVELS.len() {
            k
        } else {
            rng.random_range(0..CRF_LEVELS.len())
        };
    }
    Ok(chosen
        .zip(level)
        .enumerate()
        .map(|(index, (scene, k))| ScenarioAssignment {
            index,
            content_id: scene.content_id.clone(),
            asset_id: scene.assets[k].clone(),
            crf: CRF_LEVELS[k],
        })
        .collect())
}

/// Checks the distinct-scene and compression-coverage constraints.
pub fn check_assignments(assignments: &[ScenarioAssignment], count: usize) -> std::result::Result<(), String> {
    if assignments.len() != count {
        return Err(format!("{} assignments, expected {count}", assignments.len()));
    }
    let mut scenes = std::collections::BTreeSet::new();
    for (i, a) in assignments.iter().enumerate() {
        if a.index != i {
            return Err(format!("assignment {i} carries index {}", a.index));
        }
        if !scenes.insert(a.content_id.as_str()) {
            return Err(format!("scene `{}` assigned twice", a.content_id));
        }
    }
    for crf in CRF_LEVELS {
        if !assignments.iter().any(|a| a.crf == crf) {
            return Err(format!("crf {crf} never assigned"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scenes(n: usize) -> Vec<EligibleScene> {
        (0..n)
            .map(|i| {
                let id = format!("s{i:02}");
                EligibleScene {
                    assets: CRF_LEVELS.map(|c| format!("{id}_crf{c}")),
                    content_id: id,
                }
            })
            .collect()
    }

    #[test]
    fn constraints_hold_for_ten_thousand_seeds() {
        let pool = scenes(39);
        for seed in 0..10_000 {
            let a = assign_scenarios(&pool, 10, seed).unwrap();
            check_assignments(&a, 10).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            for x in &a {
                assert_eq!(x.asset_id, format!("{}_crf{}", x.content_id, x.crf));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let pool = scenes(12);
        assert_eq!(assign_scenarios(&pool, 10, 4).unwrap(), assign_scenarios(&pool, 10, 4).unwrap());
        assert_ne!(assign_scenarios(&pool, 10, 4).unwrap(), assign_scenarios(&pool, 10, 5).unwrap());
    }

    #[test]
    fn too_few_scenes() {
        let err = assign_scenarios(&scenes(9), 10, 0).unwrap_err();
        assert!(matches!(err, StudyError::ManifestTooSmall { eligible: 9, required: 10 }));
    }

    #[test]
    fn exactly_ten_scenes_uses_all() {
        let a = assign_scenarios(&scenes(10), 10, 3).unwrap();
        check_assignments(&a, 10).unwrap();
    }

    #[test]
    fn scene_choice_is_roughly_uniform() {
        let pool = scenes(20);
        let mut counts = [0usize; 20];
        for seed in 0..4000 {
            for a in assign_scenarios(&pool, 10, seed).unwrap() {
                counts[a.content_id[1..].parse::<usize>().unwrap()] += 1;
            }
        }
        for c in counts {
            assert!((1800..=2200).contains(&c), "{counts:?}");
        }
    }
}
