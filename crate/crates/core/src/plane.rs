//! Dense single-channel `f64` planes and the filtering primitives shared by
//! the metric and feature modules.

use crate::error::{Error, Result};

/// Row-major plane of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// How a convolution treats samples outside the plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Only output positions where the kernel fits entirely; the result shrinks
    /// by `kernel.len() - 1` in each dimension.
    Valid,
    /// Whole-sample symmetric reflection (`d c b | a b c d | c b a`); output
    /// keeps the input size.
    Reflect,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Plane::new(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn same_shape(&self, other: &Plane) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two planes of identical shape.
    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Separable 2-D convolution with the same symmetric kernel along both axes.
    pub fn convolve(&self, kernel: &[f64], border: Border) -> Plane {
        let horizontal = self.convolve_rows(kernel, border);
        horizontal.transpose().convolve_rows(kernel, border).transpose()
    }

    fn convolve_rows(&self, kernel: &[f64], border: Border) -> Plane {
        let taps = kernel.len();
        let half = taps / 2;
        match border {
            Border::Valid => {
                let out_w = self.width + 1 - taps;
                let mut data = Vec::with_capacity(out_w * self.height);
                for y in 0..self.height {
                    let row = self.row(y);
                    for x in 0..out_w {
                        let mut acc = 0.0;
                        for (k, &w) in kernel.iter().enumerate() {
                            acc += w * row[x + k];
                        }
                        data.push(acc);
                    }
                }
                Plane {
                    width: out_w,
                    height: self.height,
                    data,
                }
            }
            Border::Reflect => {
                let w = self.width as isize;
                let mut data = Vec::with_capacity(self.data.len());
                for y in 0..self.height {
                    let row = self.row(y);
                    for x in 0..self.width {
                        let mut acc = 0.0;
                        for (k, &weight) in kernel.iter().enumerate() {
                            let pos = reflect(x as isize + k as isize - half as isize, w);
                            acc += weight * row[pos];
                        }
                        data.push(acc);
                    }
                }
                Plane {
                    width: self.width,
                    height: self.height,
                    data,
                }
            }
        }
    }

    pub fn transpose(&self) -> Plane {
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.data[y * self.width + x];
            }
        }
        Plane {
            width: self.height,
            height: self.width,
            data,
        }
    }

    /// 2x2 box average followed by decimation. A trailing odd row or column
    /// is dropped.
    pub fn box_downsample(&self) -> Plane {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let r0 = self.row(2 * y);
            let r1 = self.row(2 * y + 1);
            for x in 0..w {
                data.push((r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * 0.25);
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    /// Keeps every second sample in each dimension, starting at (0, 0).
    pub fn decimate(&self) -> Plane {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        let mut data = Vec::with_capacity(w * h);
        for y in (0..self.height).step_by(2) {
            let row = self.row(y);
            data.extend(row.iter().step_by(2));
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}

/// Symmetric whole-sample reflection of `i` into `[0, n)`.
fn reflect(mut i: isize, n: isize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Normalized 1-D Gaussian of `size` taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn gaussian_kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..11 {
            assert_eq!(k[i], k[10 - i]);
        }
    }

    #[test]
    fn valid_convolution_shrinks() {
        let p = Plane::filled(20, 15, 3.0);
        let out = p.convolve(&gaussian_kernel(5, 1.0), Border::Valid);
        assert_eq!((out.width(), out.height()), (16, 11));
        assert!(out.data().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn reflect_convolution_preserves_constants() {
        let p = Plane::filled(7, 9, 42.0);
        let out = p.convolve(&gaussian_kernel(17, 17.0 / 5.0), Border::Reflect);
        assert_eq!((out.width(), out.height()), (7, 9));
        assert!(out.data().iter().all(|v| (v - 42.0).abs() < 1e-9));
    }

    #[test]
    fn box_downsample_averages_quads() {
        let p = Plane::new(4, 2, vec![0.0, 2.0, 4.0, 8.0, 2.0, 4.0, 4.0, 0.0]).unwrap();
        let d = p.box_downsample();
        assert_eq!(d.data(), &[2.0, 4.0]);
    }
}
