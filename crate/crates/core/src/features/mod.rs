//! The fused feature set: VIF at four scales, DLM and motion.
//!
//! All features are computed on luma. The constants that define them live in
//! a versioned [`FeatureConfig`] that trained models carry, so a model can
//! refuse features computed under a different definition.

mod dlm;
mod motion;
mod vif;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::VideoClip;
use crate::plane::Plane;

pub use dlm::{dlm, DlmScore, DLM_LEVELS, DLM_MIN_SIDE};
pub use motion::motion;
pub use vif::{vif_scales, VifScores, VIF_MIN_SIDE, VIF_SCALES};

pub const FEATURE_CONFIG_VERSION: &str = "teleqa-features-1";
pub const FEATURE_NAMES: [&str; 6] = ["vif0", "vif1", "vif2", "vif3", "dlm", "motion"];
pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub version: String,
    /// Visual noise variance of the VIF channel model.
    pub vif_sigma_nsq: f64,
    /// Upper bound on the VIF gain, so sharpening never scores above 1.
    pub vif_gain_limit: f64,
    /// Sigma of the 5-tap blur applied before frame differencing.
    pub motion_sigma: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            version: FEATURE_CONFIG_VERSION.to_string(),
            vif_sigma_nsq: 2.0,
            vif_gain_limit: 1.0,
            motion_sigma: 1.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub vif: [f64; VIF_SCALES],
    pub dlm: f64,
    pub motion: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.vif[0],
            self.vif[1],
            self.vif[2],
            self.vif[3],
            self.dlm,
            self.motion,
        ]
    }

    pub fn from_array(v: [f64; NUM_FEATURES]) -> Self {
        FeatureVector {
            vif: [v[0], v[1], v[2], v[3]],
            dlm: v[4],
            motion: v[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Component-wise arithmetic mean.
    pub fn mean(vectors: &[FeatureVector]) -> Option<FeatureVector> {
        if vectors.is_empty() {
            return None;
        }
        let mut acc = [0.0; NUM_FEATURES];
        for v in vectors {
            for (a, x) in acc.iter_mut().zip(v.to_array()) {
                *a += x;
            }
        }
        let n = vectors.len() as f64;
        Some(FeatureVector::from_array(acc.map(|a| a / n)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWarning {
    pub frame: usize,
    pub feature: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFeatures {
    pub per_frame: Vec<FeatureVector>,
    pub pooled: FeatureVector,
    pub warnings: Vec<FeatureWarning>,
}

/// Fidelity features of one frame pair plus the motion of the reference
/// relative to its previous frame (`None` for the first frame).
pub fn frame_features(
    reference: &Plane,
    distorted: &Plane,
    previous_reference: Option<&Plane>,
    config: &FeatureConfig,
) -> Result<(FeatureVector, Vec<(String, String)>)> {
    let mut warnings = Vec::new();
    let v = vif_scales(reference, distorted, config.vif_sigma_nsq, config.vif_gain_limit)?;
    for (s, flagged) in v.degenerate.iter().enumerate() {
        if *flagged {
            warnings.push((
                format!("vif{s}"),
                "reference carries no information at this scale".to_string(),
            ));
        }
    }
    let d = dlm(reference, distorted)?;
    if d.degenerate {
        warnings.push(("dlm".to_string(), "reference has no detail energy".to_string()));
    }
    let m = match previous_reference {
        Some(prev) => motion(prev, reference, config.motion_sigma)?,
        None => 0.0,
    };
    Ok((
        FeatureVector {
            vif: v.scales,
            dlm: d.value,
            motion: m,
        },
        warnings,
    ))
}

/// Extracts per-frame features for a reference/distorted pair and pools them
/// with the arithmetic mean. Frames are processed in parallel; results are
/// assembled in frame order.
pub fn extract_clip_features(
    reference: &VideoClip,
    distorted: &VideoClip,
    config: &FeatureConfig,
) -> Result<ClipFeatures> {
    if reference.width() != distorted.width() || reference.height() != distorted.height() {
        return Err(Error::DimensionMismatch(format!(
            "reference is {}x{}, distorted is {}x{}",
            reference.width(),
            reference.height(),
            distorted.width(),
            distorted.height()
        )));
    }
    if reference.len() != distorted.len() {
        return Err(Error::FrameCountMismatch {
            reference: reference.len(),
            distorted: distorted.len(),
        });
    }
    let results: Vec<Result<(FeatureVector, Vec<(String, String)>)>> = (0..reference.len())
        .into_par_iter()
        .map(|i| {
            let r = reference.frames()[i].luma();
            let d = distorted.frames()[i].luma();
            let prev = (i > 0).then(|| reference.frames()[i - 1].luma());
            frame_features(&r, &d, prev.as_ref(), config)
        })
        .collect();
    let mut per_frame = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (frame, res) in results.into_iter().enumerate() {
        let (fv, w) = res?;
        per_frame.push(fv);
        warnings.extend(w.into_iter().map(|(feature, message)| FeatureWarning {
            frame,
            feature,
            message,
        }));
    }
    let pooled = FeatureVector::mean(&per_frame).ok_or(Error::EmptyClip)?;
    Ok(ClipFeatures {
        per_frame,
        pooled,
        warnings,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRow {
    frame_idx: usize,
    vif0: f64,
    vif1: f64,
    vif2: f64,
    vif3: f64,
    dlm: f64,
    motion: f64,
}

/// Writes per-frame features as CSV (`frame_idx, vif0..vif3, dlm, motion`).
pub fn write_feature_csv<W: Write>(features: &ClipFeatures, w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for (frame_idx, f) in features.per_frame.iter().enumerate() {
        writer.serialize(FeatureRow {
            frame_idx,
            vif0: f.vif[0],
            vif1: f.vif[1],
            vif2: f.vif[2],
            vif3: f.vif[3],
            dlm: f.dlm,
            motion: f.motion,
        })?;
    }
    writer.flush().map_err(|e| Error::io("<feature csv>", e))?;
    Ok(())
}

/// Reads a feature CSV back into per-frame vectors, checking frame order.
pub fn read_feature_csv<R: Read>(r: R) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<FeatureRow>().enumerate() {
        let row = row?;
        if row.frame_idx != i {
            return Err(Error::Corrupted(format!(
                "feature rows out of order: expected frame {i}, found {}",
                row.frame_idx
            )));
        }
        out.push(FeatureVector {
            vif: [row.vif0, row.vif1, row.vif2, row.vif3],
            dlm: row.dlm,
            motion: row.motion,
        });
    }
    Ok(out)
}

/// JSON sidecar stored next to each feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub feature_config: FeatureConfig,
    pub content_id: String,
    pub asset_id: String,
    /// SHA-256 of the reference and distorted input files; used to skip
    /// recomputation when inputs are unchanged.
    pub reference_sha256: String,
    pub distorted_sha256: String,
    pub frames: usize,
    pub pooled: FeatureVector,
    pub warnings: Vec<FeatureWarning>,
}
