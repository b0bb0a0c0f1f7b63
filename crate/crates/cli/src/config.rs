//! Optional TOML pipeline configuration. Every value can also be given as a
//! flag; flags win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teleqa_core::dataset::{DEFAULT_DECODER_TEMPLATE, DEFAULT_ENCODER_TEMPLATE, DEFAULT_MIN_RATERS};
use teleqa_core::features::{FeatureConfig, FEATURE_CONFIG_VERSION};
use teleqa_core::svr::HyperGrid;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    /// Base directory for relative media paths in the manifest; defaults to
    /// the manifest's directory.
    pub media_root: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub feature_version: String,
    pub split: SplitConfig,
    pub grid: GridConfig,
    pub thresholds: Thresholds,
    pub encoder: EncoderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub c: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_raters: usize,
    pub max_object_failure_fraction: f64,
    pub outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub template: String,
    pub decoder: Option<String>,
    pub extension: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: None,
            media_root: None,
            out_dir: None,
            feature_version: FEATURE_CONFIG_VERSION.to_string(),
            split: SplitConfig::default(),
            grid: GridConfig::default(),
            thresholds: Thresholds::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fraction: 0.8,
            seed: None,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            c: None,
            gamma: None,
            epsilon: None,
            folds: 3,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_raters: DEFAULT_MIN_RATERS,
            max_object_failure_fraction: 0.5,
            outliers: 5,
        }
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            template: DEFAULT_ENCODER_TEMPLATE.to_string(),
            decoder: Some(DEFAULT_DECODER_TEMPLATE.to_string()),
            extension: "mp4".to_string(),
        }
    }
}

impl GridConfig {
    pub fn hyper_grid(&self) -> HyperGrid {
        let mut grid = HyperGrid::default();
        if let Some(c) = &self.c {
            grid.c = c.clone();
        }
        if let Some(g) = &self.gamma {
            grid.gamma = g.clone();
        }
        if let Some(e) = &self.epsilon {
            grid.epsilon = e.clone();
        }
        grid
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_version != FEATURE_CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "feature_version `{}` is not supported (this build computes `{FEATURE_CONFIG_VERSION}`)",
                self.feature_version
            )));
        }
        check_fraction(self.split.fraction)?;
        if self.grid.folds < 2 {
            return Err(CliError::Config(format!("grid.folds must be at least 2, got {}", self.grid.folds)));
        }
        let grid = self.grid.hyper_grid();
        for (name, values) in [("c", &grid.c), ("gamma", &grid.gamma), ("epsilon", &grid.epsilon)] {
            if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(CliError::Config(format!("grid.{name} must be a nonempty list of finite non-negative values")));
            }
        }
        let f = self.thresholds.max_object_failure_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::Config(format!("max_object_failure_fraction {f} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig::default()
    }
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("split fraction {fraction} outside (0, 1)")))
    }
}
