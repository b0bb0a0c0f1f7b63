//! Pixel-domain Visual Information Fidelity over four dyadic scales.

use crate::error::{Error, Result};
use crate::plane::{gaussian_kernel, Border, Plane};

pub const VIF_SCALES: usize = 4;
/// Smallest side accepted, so the coarsest scale keeps at least 4 samples.
pub const VIF_MIN_SIDE: usize = 32;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VifScores {
    pub scales: [f64; VIF_SCALES],
    /// Set for scales whose reference carried no information (denominator
    /// zero); those scales report 1.0.
    pub degenerate: [bool; VIF_SCALES],
}

/// Kernel for scale `s`: `2^(4-s) + 1` taps with sigma = taps / 5.
fn scale_kernel(scale: usize) -> Vec<f64> {
    let taps = (1usize << (4 - scale)) + 1;
    gaussian_kernel(taps, taps as f64 / 5.0)
}

pub fn vif_scales(
    reference: &Plane,
    distorted: &Plane,
    sigma_nsq: f64,
    gain_limit: f64,
) -> Result<VifScores> {
    reference.same_shape(distorted)?;
    if reference.width() < VIF_MIN_SIDE || reference.height() < VIF_MIN_SIDE {
        return Err(Error::TooSmall(format!(
            "VIF needs at least {VIF_MIN_SIDE}x{VIF_MIN_SIDE}, got {}x{}",
            reference.width(),
            reference.height()
        )));
    }
    let mut out = VifScores {
        scales: [1.0; VIF_SCALES],
        degenerate: [false; VIF_SCALES],
    };
    let mut x = reference.clone();
    let mut y = distorted.clone();
    for scale in 0..VIF_SCALES {
        let kernel = scale_kernel(scale);
        if scale > 0 {
            x = x.convolve(&kernel, Border::Reflect).decimate();
            y = y.convolve(&kernel, Border::Reflect).decimate();
        }
        let (num, den) = vif_sums(&x, &y, &kernel, sigma_nsq, gain_limit);
        if den <= 0.0 {
            out.degenerate[scale] = true;
            log::warn!("VIF scale {scale}: reference has no variance, reporting 1.0");
        } else {
            out.scales[scale] = num / den;
        }
    }
    Ok(out)
}

fn vif_sums(x: &Plane, y: &Plane, kernel: &[f64], sigma_nsq: f64, gain_limit: f64) -> (f64, f64) {
    let mu_x = x.convolve(kernel, Border::Reflect);
    let mu_y = y.convolve(kernel, Border::Reflect);
    let xx = x.zip_map(x, |a, b| a * b).convolve(kernel, Border::Reflect);
    let yy = y.zip_map(y, |a, b| a * b).convolve(kernel, Border::Reflect);
    let xy = x.zip_map(y, |a, b| a * b).convolve(kernel, Border::Reflect);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..mu_x.data().len() {
        let (mx, my) = (mu_x.data()[i], mu_y.data()[i]);
        let mut var_x = (xx.data()[i] - mx * mx).max(0.0);
        let var_y = (yy.data()[i] - my * my).max(0.0);
        let cov = xy.data()[i] - mx * my;

        let mut gain = cov / (var_x + EPS);
        let mut noise = var_y - gain * cov;
        if var_x < EPS {
            gain = 0.0;
            noise = var_y;
            var_x = 0.0;
        }
        if var_y < EPS {
            gain = 0.0;
            noise = 0.0;
        }
        if gain < 0.0 {
            noise = var_y;
            gain = 0.0;
        }
        gain = gain.min(gain_limit);
        noise = noise.max(EPS);

        num += (1.0 + gain * gain * var_x / (noise + sigma_nsq)).log2();
        den += (1.0 + var_x / sigma_nsq).log2();
    }
    (num, den)
}
