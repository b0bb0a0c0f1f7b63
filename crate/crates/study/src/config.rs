//! Service configuration: a TOML file with `TELEQA_*` environment overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teleqa_core::stats::Dimension;

use crate::error::{Result, StudyError};

pub const SCENARIOS_PER_SESSION: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub bind: String,
    pub manifest: PathBuf,
    /// Base directory for relative media paths in the manifest.
    pub media_root: PathBuf,
    /// Built survey bundle served at `/`; disabled when unset.
    pub ui_root: Option<PathBuf>,
    /// Append-only record log (one JSON document per line).
    pub log_path: PathBuf,
    /// Bearer token for export endpoints; exports are refused when unset.
    pub operator_token: Option<String>,
    /// Mixed into session seeds. A random secret is drawn at startup when
    /// unset; recorded seeds keep replays exact either way.
    pub secret: Option<String>,
    /// Minimum screen diagonal in inches.
    pub min_screen_diagonal: f64,
    /// Accepted calibration range in pixels per millimetre.
    pub ppmm_range: [f64; 2],
    /// Physical width at which every participant sees the videos.
    pub video_width_mm: f64,
    /// Seconds after the first byte-0 fetch during which continuation ranges
    /// of the same token are served.
    pub continuation_window_secs: u64,
    pub landolt: LandoltConfig,
    pub ishihara: IshiharaConfig,
    pub questionnaire: QuestionnaireConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandoltConfig {
    pub rings: usize,
    pub pass_fraction: f64,
    /// Gap widths in millimetres, cycled over the rings.
    pub gap_mm: Vec<f64>,
    /// Michelson contrasts, cycled over the rings.
    pub contrasts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IshiharaPlate {
    pub plate_id: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IshiharaConfig {
    pub plates: Vec<IshiharaPlate>,
    pub pass_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuestionnaireConfig {
    /// Item identifiers per dimension, in presentation order.
    pub items: BTreeMap<Dimension, Vec<String>>,
    /// Choices offered in the object-identification question.
    pub object_options: Vec<String>,
    /// Objects actually visible per scene, for scoring the check.
    pub object_truth: BTreeMap<String, Vec<String>>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            bind: "127.0.0.1:8080".into(),
            manifest: PathBuf::from("manifest.json"),
            media_root: PathBuf::from("."),
            ui_root: None,
            log_path: PathBuf::from("study-log.jsonl"),
            operator_token: None,
            secret: None,
            min_screen_diagonal: 25.0,
            ppmm_range: [1.0, 20.0],
            video_width_mm: 400.0,
            continuation_window_secs: 900,
            landolt: LandoltConfig::default(),
            ishihara: IshiharaConfig::default(),
            questionnaire: QuestionnaireConfig::default(),
        }
    }
}

impl Default for LandoltConfig {
    fn default() -> Self {
        LandoltConfig {
            rings: 8,
            pass_fraction: 0.75,
            gap_mm: vec![1.5, 1.2, 1.0, 0.8],
            contrasts: vec![1.0, 0.5],
        }
    }
}

impl Default for IshiharaConfig {
    fn default() -> Self {
        let plates = [("1", "12"), ("2", "8"), ("3", "29"), ("4", "5"), ("5", "3"), ("6", "15"), ("7", "74"), ("8", "2"), ("9", "6"), ("10", "45")];
        IshiharaConfig {
            plates: plates
                .iter()
                .map(|(id, a)| IshiharaPlate {
                    plate_id: id.to_string(),
                    answer: a.to_string(),
                })
                .collect(),
            pass_fraction: 0.8,
        }
    }
}

impl Default for QuestionnaireConfig {
    fn default() -> Self {
        let items = Dimension::ALL
            .iter()
            .map(|d| (*d, (1..=3).map(|i| format!("{}_{i}", d.as_str())).collect()))
            .collect();
        QuestionnaireConfig {
            items,
            object_options: ["pedestrian", "cyclist", "car", "truck", "traffic_light", "road_sign", "animal"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            object_truth: BTreeMap::new(),
        }
    }
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StudyError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: StudyConfig =
            toml::from_str(text).map_err(|e| StudyError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `TELEQA_BIND`, `TELEQA_MANIFEST`, `TELEQA_MEDIA_ROOT`,
    /// `TELEQA_UI_ROOT`, `TELEQA_LOG_PATH`, `TELEQA_OPERATOR_TOKEN` and
    /// `TELEQA_SECRET` from `lookup`.
    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(v) = lookup("TELEQA_BIND") {
            self.bind = v;
        }
        if let Some(v) = lookup("TELEQA_MANIFEST") {
            self.manifest = v.into();
        }
        if let Some(v) = lookup("TELEQA_MEDIA_ROOT") {
            self.media_root = v.into();
        }
        if let Some(v) = lookup("TELEQA_UI_ROOT") {
            self.ui_root = Some(v.into());
        }
        if let Some(v) = lookup("TELEQA_LOG_PATH") {
            self.log_path = v.into();
        }
        if let Some(v) = lookup("TELEQA_OPERATOR_TOKEN") {
            self.operator_token = Some(v);
        }
        if let Some(v) = lookup("TELEQA_SECRET") {
            self.secret = Some(v);
        }
    }

    pub fn apply_env(&mut self) {
        self.apply_overrides(|k| std::env::var(k).ok());
    }

    pub fn validate(&self) -> Result<()> {
        let fraction = |f: f64| (0.0..=1.0).contains(&f);
        let err = |m: &str| Err(StudyError::Config(m.to_string()));
        if !(self.min_screen_diagonal.is_finite() && self.min_screen_diagonal > 0.0) {
            return err("min_screen_diagonal must be positive");
        }
        if !(self.ppmm_range[0] > 0.0 && self.ppmm_range[0] < self.ppmm_range[1]) {
            return err("ppmm_range must be an increasing positive interval");
        }
        if !(self.video_width_mm > 0.0) {
            return err("video_width_mm must be positive");
        }
        if self.landolt.rings == 0 || self.landolt.gap_mm.is_empty() || self.landolt.contrasts.is_empty() {
            return err("landolt needs at least one ring, gap size and contrast");
        }
        if self.landolt.gap_mm.iter().any(|g| !(*g > 0.0))
            || self.landolt.contrasts.iter().any(|c| !(*c > 0.0 && *c <= 1.0))
        {
            return err("landolt gap sizes must be positive and contrasts in (0, 1]");
        }
        if !fraction(self.landolt.pass_fraction) || !fraction(self.ishihara.pass_fraction) {
            return err("pass fractions must lie in [0, 1]");
        }
        if self.ishihara.plates.is_empty() {
            return err("ishihara needs at least one plate");
        }
        for d in Dimension::ALL {
            if self.questionnaire.items.get(&d).is_none_or(|items| items.is_empty()) {
                return Err(StudyError::Config(format!("questionnaire has no items for {d}")));
            }
        }
        for items in self.questionnaire.items.values() {
            let mut seen = std::collections::BTreeSet::new();
            if let Some(dup) = items.iter().find(|i| !seen.insert(i.as_str())) {
                return Err(StudyError::Config(format!("duplicate questionnaire item `{dup}`")));
            }
        }
        if self.questionnaire.object_options.is_empty() {
            return err("object_options must not be empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        StudyConfig::default().validate().unwrap();
        let c = StudyConfig::default();
        assert_eq!(c.landolt.rings, 8);
        assert_eq!(c.landolt.pass_fraction, 0.75);
        assert_eq!(c.ishihara.pass_fraction, 0.8);
        assert_eq!(c.min_screen_diagonal, 25.0);
    }

    #[test]
    fn toml_with_overrides() {
        let mut c = StudyConfig::from_toml(
            r#"
            bind = "0.0.0.0:9000"
            operator_token = "file-token"
            [landolt]
            pass_fraction = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(c.landolt.pass_fraction, 0.5);
        assert_eq!(c.landolt.rings, 8);
        c.apply_overrides(|k| (k == "TELEQA_OPERATOR_TOKEN").then(|| "env-token".to_string()));
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.operator_token.as_deref(), Some("env-token"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(StudyConfig::from_toml("bnd = \"x\"").is_err());
        assert!(StudyConfig::from_toml("[landolt]\npass_fraction = 1.5").is_err());
        assert!(StudyConfig::from_toml("ppmm_range = [5.0, 2.0]").is_err());
    }
}
