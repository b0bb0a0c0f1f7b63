//! Signal-level baseline metrics: PSNR, SSIM and MS-SSIM on 8-bit luma.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::{gaussian_kernel, Border, Plane};

/// PSNR reported for identical planes in tabular output.
pub const PSNR_CAP_DB: f64 = 100.0;

const PEAK: f64 = 255.0;

/// Peak signal-to-noise ratio in dB. Identical planes give `+inf`; use
/// [`psnr_capped`] for tabular output.
pub fn psnr(reference: &Plane, distorted: &Plane) -> Result<f64> {
    reference.same_shape(distorted)?;
    let mse = mse(reference, distorted);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

pub fn psnr_capped(reference: &Plane, distorted: &Plane) -> Result<f64> {
    psnr(reference, distorted).map(|db| db.min(PSNR_CAP_DB))
}

fn mse(a: &Plane, b: &Plane) -> f64 {
    let n = a.data().len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    /// Side of the square Gaussian window; odd.
    pub window: usize,
    pub sigma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: PEAK,
            window: 11,
            sigma: 1.5,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::InvalidParameter("SSIM k1 and k2 must be positive".into()));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "SSIM window side {} must be odd",
                self.window
            )));
        }
        if !(self.sigma > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::InvalidParameter(
                "SSIM sigma and dynamic range must be positive".into(),
            ));
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    fn kernel(&self) -> Vec<f64> {
        gaussian_kernel(self.window, self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsSsimParams {
    pub weights: Vec<f64>,
    pub base: SsimParams,
}

impl Default for MsSsimParams {
    fn default() -> Self {
        MsSsimParams {
            weights: vec![0.0448, 0.2856, 0.3001, 0.2363, 0.1333],
            base: SsimParams::default(),
        }
    }
}

impl MsSsimParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.weights.is_empty() {
            return Err(Error::InvalidParameter("MS-SSIM needs at least one scale".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "MS-SSIM weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-4 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "MS-SSIM weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn scales(&self) -> usize {
        self.weights.len()
    }
}

/// Window statistics over the valid region.
struct Moments {
    mu_x: Plane,
    mu_y: Plane,
    var_x: Plane,
    var_y: Plane,
    cov: Plane,
}

fn moments(x: &Plane, y: &Plane, kernel: &[f64]) -> Moments {
    let mu_x = x.convolve(kernel, Border::Valid);
    let mu_y = y.convolve(kernel, Border::Valid);
    let xx = x.zip_map(x, |a, b| a * b).convolve(kernel, Border::Valid);
    let yy = y.zip_map(y, |a, b| a * b).convolve(kernel, Border::Valid);
    let xy = x.zip_map(y, |a, b| a * b).convolve(kernel, Border::Valid);
    Moments {
        var_x: xx.zip_map(&mu_x, |e, m| e - m * m),
        var_y: yy.zip_map(&mu_y, |e, m| e - m * m),
        cov: xy.zip_map(&mu_x.zip_map(&mu_y, |a, b| a * b), |e, m| e - m),
        mu_x,
        mu_y,
    }
}

/// Mean luminance term and mean contrast-structure term of one scale.
fn ssim_components(x: &Plane, y: &Plane, params: &SsimParams) -> (f64, f64, f64) {
    let m = moments(x, y, &params.kernel());
    let (c1, c2) = (params.c1(), params.c2());
    let n = m.mu_x.data().len() as f64;
    let (mut lum, mut cs, mut full) = (0.0, 0.0, 0.0);
    for i in 0..m.mu_x.data().len() {
        let (mx, my) = (m.mu_x.data()[i], m.mu_y.data()[i]);
        let (vx, vy, cov) = (m.var_x.data()[i], m.var_y.data()[i], m.cov.data()[i]);
        let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        let c = (2.0 * cov + c2) / (vx + vy + c2);
        lum += l;
        cs += c;
        full += l * c;
    }
    (lum / n, cs / n, full / n)
}

fn check_window(plane: &Plane, window: usize, what: &str) -> Result<()> {
    if plane.width() < window || plane.height() < window {
        return Err(Error::TooSmall(format!(
            "{what}: {}x{} plane is smaller than the {window}x{window} window",
            plane.width(),
            plane.height()
        )));
    }
    Ok(())
}

/// Mean SSIM over the valid-region sliding-window map.
pub fn ssim(reference: &Plane, distorted: &Plane, params: &SsimParams) -> Result<f64> {
    params.validate()?;
    reference.same_shape(distorted)?;
    check_window(reference, params.window, "SSIM")?;
    Ok(ssim_components(reference, distorted, params).2)
}

/// Multi-scale SSIM. Contrast-structure terms are taken at every scale and
/// the luminance term at the coarsest one; negative terms are clamped to zero
/// before exponentiation.
pub fn ms_ssim(reference: &Plane, distorted: &Plane, params: &MsSsimParams) -> Result<f64> {
    params.validate()?;
    reference.same_shape(distorted)?;
    let scales = params.scales();
    let shrink = 1usize << (scales - 1);
    let window = params.base.window;
    if reference.width() / shrink < window || reference.height() / shrink < window {
        return Err(Error::TooSmall(format!(
            "MS-SSIM: {}x{} cannot be downsampled {} times and keep a {window}x{window} window",
            reference.width(),
            reference.height(),
            scales - 1
        )));
    }
    let mut x = reference.clone();
    let mut y = distorted.clone();
    let mut score = 1.0;
    for (scale, &w) in params.weights.iter().enumerate() {
        let (lum, cs, _) = ssim_components(&x, &y, &params.base);
        score *= cs.max(0.0).powf(w);
        if scale + 1 == scales {
            score *= lum.max(0.0).powf(w);
        } else {
            x = x.box_downsample();
            y = y.box_downsample();
        }
    }
    Ok(score)
}
