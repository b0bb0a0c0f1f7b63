//! Detail Loss Metric on a separable Haar decomposition.
//!
//! Each distorted detail coefficient is restored toward the reference by
//! keeping it only where its sign agrees with the reference and clipping its
//! magnitude to the reference magnitude. Whatever the restoration discards is
//! additive impairment and does not enter the numerator. Subbands are pooled
//! with a cubic Minkowski sum.

use crate::error::{Error, Result};
use crate::plane::Plane;

pub const DLM_LEVELS: usize = 4;
pub const DLM_MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlmScore {
    pub value: f64,
    /// Reference had no detail energy; `value` is 1.0.
    pub degenerate: bool,
}

/// One Haar level: approximation plus horizontal, vertical and diagonal
/// details. Odd trailing rows/columns are dropped.
pub(crate) fn haar_level(p: &Plane) -> (Plane, [Plane; 3]) {
    let w = p.width() / 2;
    let h = p.height() / 2;
    let mut bands: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(w * h));
    for y in 0..h {
        let r0 = p.row(2 * y);
        let r1 = p.row(2 * y + 1);
        for x in 0..w {
            let (a, b, c, d) = (r0[2 * x], r0[2 * x + 1], r1[2 * x], r1[2 * x + 1]);
            bands[0].push((a + b + c + d) * 0.5);
            bands[1].push((a - b + c - d) * 0.5);
            bands[2].push((a + b - c - d) * 0.5);
            bands[3].push((a - b - c + d) * 0.5);
        }
    }
    let [ll, lh, hl, hh] = bands.map(|data| Plane::new(w, h, data).expect("band shape"));
    (ll, [lh, hl, hh])
}

fn detail_subbands(p: &Plane) -> Vec<Plane> {
    let mut out = Vec::with_capacity(3 * DLM_LEVELS);
    let mut approx = p.clone();
    for _ in 0..DLM_LEVELS {
        let (ll, details) = haar_level(&approx);
        out.extend(details);
        approx = ll;
    }
    out
}

/// Distorted coefficient restored toward the reference.
pub(crate) fn restore(reference: f64, distorted: f64) -> f64 {
    if reference == 0.0 || reference.signum() != distorted.signum() {
        return 0.0;
    }
    reference.signum() * distorted.abs().min(reference.abs())
}

fn minkowski3(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v.abs().powi(3)).sum::<f64>().cbrt()
}

pub fn dlm(reference: &Plane, distorted: &Plane) -> Result<DlmScore> {
    reference.same_shape(distorted)?;
    if reference.width() < DLM_MIN_SIDE || reference.height() < DLM_MIN_SIDE {
        return Err(Error::TooSmall(format!(
            "DLM needs at least {DLM_MIN_SIDE}x{DLM_MIN_SIDE}, got {}x{}",
            reference.width(),
            reference.height()
        )));
    }
    let ref_bands = detail_subbands(reference);
    let dist_bands = detail_subbands(distorted);
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, d) in ref_bands.iter().zip(&dist_bands) {
        num += minkowski3(r.data().iter().zip(d.data()).map(|(&r, &d)| restore(r, d)));
        den += minkowski3(r.data().iter().copied());
    }
    if den <= 0.0 {
        log::warn!("DLM: reference has no detail energy, reporting 1.0");
        return Ok(DlmScore {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(DlmScore {
        value: num / den,
        degenerate: false,
    })
}
