use crate::error::Result;
use crate::plane::{gaussian_kernel, Border, Plane};

/// Mean absolute difference between Gaussian-blurred consecutive luma planes.
pub fn motion(prev: &Plane, curr: &Plane, kernel_sigma: f64) -> Result<f64> {
    prev.same_shape(curr)?;
    let kernel = gaussian_kernel(5, kernel_sigma);
    let a = prev.convolve(&kernel, Border::Reflect);
    let b = curr.convolve(&kernel, Border::Reflect);
    Ok(a.zip_map(&b, |x, y| (x - y).abs()).mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn texture(offset: f64) -> Plane {
        let data = (0..24 * 20)
            .map(|i| ((i * 37 % 101) as f64) + offset)
            .collect();
        Plane::new(24, 20, data).unwrap()
    }

    #[test]
    fn static_frames_have_no_motion() {
        let t = texture(0.0);
        assert_eq!(motion(&t, &t, 1.08).unwrap(), 0.0);
    }

    #[test]
    fn constant_shift_passes_through_blur() {
        let m = motion(&texture(0.0), &texture(10.0), 1.08).unwrap();
        assert!((m - 10.0).abs() < 1e-9, "{m}");
    }

    #[test]
    fn offset_applied_to_both_frames_is_ignored() {
        let a = motion(&texture(0.0), &texture(3.0), 1.08).unwrap();
        let b = motion(&texture(50.0), &texture(53.0), 1.08).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn mismatched_planes() {
        let small = Plane::filled(4, 4, 0.0);
        assert!(matches!(
            motion(&small, &texture(0.0), 1.08),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
