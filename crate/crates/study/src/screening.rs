//! Vision screening: Landolt C acuity rings and Ishihara colour plates.
//! Correct answers never leave the server.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{IshiharaConfig, LandoltConfig};
use crate::error::{Result, StudyError};

/// Gap direction of a Landolt C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Right,
    UpRight,
    Up,
    UpLeft,
    Left,
    DownLeft,
    Down,
    DownRight,
}

impl Orientation {
    pub const ALL: [Orientation; 8] = [
        Orientation::Right,
        Orientation::UpRight,
        Orientation::Up,
        Orientation::UpLeft,
        Orientation::Left,
        Orientation::DownLeft,
        Orientation::Down,
        Orientation::DownRight,
    ];

    /// Counter-clockwise angle of the gap from the positive x axis.
    pub fn degrees(&self) -> f64 {
        45.0 * Orientation::ALL.iter().position(|o| o == self).unwrap_or(0) as f64
    }
}

/// Rendering instructions for one ring. The outer diameter is five gap
/// widths, as on a standard optotype chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandoltRing {
    pub index: usize,
    pub gap_mm: f64,
    pub gap_px: f64,
    pub diameter_px: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningChallenge {
    pub ppmm: f64,
    pub landolt: Vec<LandoltRing>,
    pub ishihara_plates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSubmission {
    pub ppmm: f64,
    pub landolt_answers: Vec<Orientation>,
    pub ishihara_answers: Vec<String>,
}

const LANDOLT_STREAM: u64 = 0x4c41_4e44_4f4c_5400;

/// Ring orientations for a session; fixed by the session seed.
pub fn landolt_orientations(seed: u64, rings: usize) -> Vec<Orientation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ LANDOLT_STREAM);
    (0..rings)
        .map(|_| Orientation::ALL[rng.random_range(0..Orientation::ALL.len())])
        .collect()
}

pub fn check_ppmm(ppmm: f64, range: [f64; 2]) -> Result<()> {
    if !(ppmm.is_finite() && ppmm >= range[0] && ppmm <= range[1]) {
        return Err(StudyError::Validation(format!(
            "calibration {ppmm} px/mm outside [{}, {}]",
            range[0], range[1]
        )));
    }
    Ok(())
}

/// Ring geometry in screen pixels for a calibrated display. Orientations
/// are not part of the challenge; rings are drawn by [`landolt_svg`].
pub fn landolt_challenge(ppmm: f64, config: &LandoltConfig) -> Vec<LandoltRing> {
    (0..config.rings)
        .map(|i| {
            let gap_mm = config.gap_mm[i % config.gap_mm.len()];
            LandoltRing {
                index: i,
                gap_mm,
                gap_px: gap_mm * ppmm,
                diameter_px: 5.0 * gap_mm * ppmm,
                contrast: config.contrasts[i % config.contrasts.len()],
            }
        })
        .collect()
}

/// Renders ring `index` as a standalone SVG on a white background. Ring
/// luminance follows the Michelson contrast against white.
pub fn landolt_svg(seed: u64, ppmm: f64, index: usize, config: &LandoltConfig) -> Result<String> {
    let rings = landolt_challenge(ppmm, config);
    let ring = rings.get(index).ok_or_else(|| {
        StudyError::Validation(format!("ring {index} out of range (0..{})", rings.len()))
    })?;
    let orientation = landolt_orientations(seed, config.rings)[index];
    let gap = ring.gap_px;
    let size = ring.diameter_px + 2.0 * gap;
    let c = size / 2.0;
    let level = (255.0 * (1.0 - ring.contrast) / (1.0 + ring.contrast)).round() as u8;
    Ok(format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size:.2}\" height=\"{size:.2}\" ",
            "viewBox=\"0 0 {size:.4} {size:.4}\">",
            "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>",
            "<circle cx=\"{c:.4}\" cy=\"{c:.4}\" r=\"{r:.4}\" fill=\"none\" ",
            "stroke=\"rgb({l},{l},{l})\" stroke-width=\"{gap:.4}\"/>",
            "<rect x=\"{c:.4}\" y=\"{gy:.4}\" width=\"{gw:.4}\" height=\"{gap:.4}\" fill=\"#ffffff\" ",
            "transform=\"rotate({rot:.1} {c:.4} {c:.4})\"/></svg>"
        ),
        size = size,
        c = c,
        r = 2.0 * gap,
        l = level,
        gap = gap,
        gy = c - gap / 2.0,
        gw = 3.0 * gap,
        rot = 0.0 - orientation.degrees(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Score {
    pub correct: usize,
    pub total: usize,
}

impl Score {
    pub fn passes(&self, fraction: f64) -> bool {
        self.correct as f64 >= fraction * self.total as f64 - 1e-12
    }
}

pub fn score_landolt(seed: u64, answers: &[Orientation], config: &LandoltConfig) -> Result<Score> {
    if answers.len() != config.rings {
        return Err(StudyError::Validation(format!(
            "expected {} Landolt answers, got {}",
            config.rings,
            answers.len()
        )));
    }
    let truth = landolt_orientations(seed, config.rings);
    Ok(Score {
        correct: truth.iter().zip(answers).filter(|(t, a)| t == a).count(),
        total: config.rings,
    })
}

pub fn score_ishihara(answers: &[String], config: &IshiharaConfig) -> Result<Score> {
    if answers.len() != config.plates.len() {
        return Err(StudyError::Validation(format!(
            "expected {} Ishihara answers, got {}",
            config.plates.len(),
            answers.len()
        )));
    }
    let correct = config
        .plates
        .iter()
        .zip(answers)
        .filter(|(p, a)| p.answer.trim().eq_ignore_ascii_case(a.trim()))
        .count();
    Ok(Score {
        correct,
        total: config.plates.len(),
    })
}
