//! Seeded synthetic textures, clips, distortions and a desk-scale labelled
//! dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use teleqa_core::dataset::Category;
use teleqa_core::{Frame, FrameRate, Plane, VideoClip};

/// Rounds and clamps to 8-bit samples.
pub fn to_u8(plane: &Plane) -> Vec<u8> {
    plane
        .data()
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Re-quantizes a plane to integer 8-bit values.
pub fn quantize_8bit(plane: &Plane) -> Plane {
    Plane::from_u8(plane.width(), plane.height(), &to_u8(plane)).expect("same shape")
}

/// Sum of random oriented sinusoids, rescaled to `mean +- contrast`.
pub fn procedural_texture(width: usize, height: usize, seed: u64, mean: f64, contrast: f64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..8)
        .map(|_| {
            let freq = rng.random_range(0.02..0.3);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(0.3..1.0) / (1.0 + 4.0 * freq);
            (freq * angle.cos(), freq * angle.sin(), phase, amp)
        })
        .collect();
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let v: f64 = waves
                .iter()
                .map(|(fx, fy, ph, a)| {
                    a * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + ph).sin()
                })
                .sum();
            data.push(v);
        }
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = (hi - lo).max(1e-12);
    let data = data
        .into_iter()
        .map(|v| mean + contrast * (2.0 * (v - lo) / span - 1.0))
        .collect();
    quantize_8bit(&Plane::new(width, height, data).expect("sized"))
}

/// Blocky pattern with a diagonal ramp and a fine grating: sharp edges
/// plus smooth shading.
pub fn edge_texture(size: usize) -> Plane {
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let block = if ((x / 16) + (y / 16)) % 2 == 0 { 60.0 } else { -60.0 };
            let ramp = 40.0 * (x + y) as f64 / (2 * size) as f64;
            let fine = 12.0 * (0.9 * x as f64).sin() * (0.7 * y as f64).cos();
            data.push(110.0 + block + ramp + fine);
        }
    }
    quantize_8bit(&Plane::new(size, size, data).expect("sized"))
}

/// Three fixed test textures of `size x size`: smooth natural-like content,
/// blocky edges, and fine high-frequency detail.
pub fn fixed_textures(size: usize) -> [Plane; 3] {
    [
        procedural_texture(size, size, 11, 128.0, 90.0),
        edge_texture(size),
        procedural_texture(size, size, 23, 120.0, 70.0).zip_map(
            &procedural_texture(size, size, 29, 0.0, 30.0),
            |a, b| a + b,
        ),
    ]
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn gaussian_weights(radius: usize, sigma: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur (radius `ceil(3 sigma)`, mirrored borders),
/// re-quantized to 8 bits.
pub fn gaussian_blur(plane: &Plane, sigma: f64) -> Plane {
    let radius = (3.0 * sigma).ceil() as usize;
    let w = gaussian_weights(radius, sigma);
    let (width, height) = (plane.width(), plane.height());
    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = w
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * plane.get(reflect(x as isize + k as isize - radius as isize, width), y))
                .sum();
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = w
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * tmp[reflect(y as isize + k as isize - radius as isize, height) * width + x])
                .sum();
        }
    }
    quantize_8bit(&Plane::new(width, height, out).expect("sized"))
}

/// Adds `sigma` times a fixed seeded standard-normal field, so increasing
/// `sigma` scales one noise pattern.
pub fn add_noise(plane: &Plane, sigma: f64, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid");
    let data = plane
        .data()
        .iter()
        .map(|v| v + sigma * normal.sample(&mut rng))
        .collect();
    quantize_8bit(&Plane::new(plane.width(), plane.height(), data).expect("same shape"))
}

/// Uniform mid-rise quantizer with the given step.
pub fn quantize(plane: &Plane, step: f64) -> Plane {
    quantize_8bit(&plane.map(|v| ((v / step).floor() + 0.5) * step))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Blur,
    Noise,
    Quantization,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Blur, Family::Noise, Family::Quantization];

    /// Parameters for severities 1 to 4.
    pub fn levels(&self) -> [f64; 4] {
        match self {
            Family::Blur => [0.5, 1.0, 2.0, 4.0],
            Family::Noise => [2.0, 5.0, 10.0, 20.0],
            Family::Quantization => [4.0, 8.0, 16.0, 32.0],
        }
    }

    pub fn apply(&self, plane: &Plane, level: f64, seed: u64) -> Plane {
        match self {
            Family::Blur => gaussian_blur(plane, level),
            Family::Noise => add_noise(plane, level, seed),
            Family::Quantization => quantize(plane, level),
        }
    }
}

/// A clip whose frames pan across a larger procedural texture by `step`
/// pixels per frame, with per-frame sensor noise.
pub fn panning_clip(
    width: usize,
    height: usize,
    frames: usize,
    step: usize,
    seed: u64,
    mean: f64,
    contrast: f64,
) -> Vec<Plane> {
    let canvas_w = width + step * frames + 1;
    let canvas = procedural_texture(canvas_w, height, seed, mean, contrast);
    (0..frames)
        .map(|t| {
            let x0 = t * step;
            let data = (0..height)
                .flat_map(|y| (0..width).map(move |x| (x, y)))
                .map(|(x, y)| canvas.get(x0 + x, y))
                .collect();
            let p = Plane::new(width, height, data).expect("sized");
            add_noise(&p, 1.0, seed.wrapping_add(1000 + t as u64))
        })
        .collect()
}

/// Wraps luma planes into a clip with seeded random chroma.
pub fn clip_from_planes(planes: &[Plane], seed: u64) -> VideoClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = planes
        .iter()
        .map(|p| {
            let (w, h) = (p.width(), p.height());
            let c = w.div_ceil(2) * h.div_ceil(2);
            let u: Vec<u8> = (0..c).map(|_| rng.random_range(96..160)).collect();
            let v: Vec<u8> = (0..c).map(|_| rng.random_range(96..160)).collect();
            Frame::new(w, h, to_u8(p), u, v).expect("consistent frame")
        })
        .collect();
    VideoClip::new(FrameRate { num: 10, den: 1 }, frames).expect("nonempty clip")
}

/// Random clip for identity checks.
pub fn random_clip(width: usize, height: usize, frames: usize, seed: u64) -> VideoClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = rng.random_range(0..4);
    let mean = rng.random_range(60.0..190.0);
    let contrast = rng.random_range(20.0..60.0);
    clip_from_planes(&panning_clip(width, height, frames, step, seed, mean, contrast), seed)
}

/// Motion computed directly: 5x5 Gaussian (outer product of the normalized
/// 1-D weights, sigma as given) applied by explicit 2-D summation with
/// mirrored borders, then the mean absolute difference.
pub fn motion_oracle(prev: &Plane, curr: &Plane, sigma: f64) -> f64 {
    let w = gaussian_weights(2, sigma);
    let (width, height) = (prev.width(), prev.height());
    let blur_at = |p: &Plane, x: usize, y: usize| -> f64 {
        let mut s = 0.0;
        for (j, wy) in w.iter().enumerate() {
            for (i, wx) in w.iter().enumerate() {
                let xx = reflect(x as isize + i as isize - 2, width);
                let yy = reflect(y as isize + j as isize - 2, height);
                s += wx * wy * p.get(xx, yy);
            }
        }
        s
    };
    let mut total = 0.0;
    for y in 0..height {
        for x in 0..width {
            total += (blur_at(prev, x, y) - blur_at(curr, x, y)).abs();
        }
    }
    total / (width * height) as f64
}

/// Monotone mapping from severity (1 = mildest) to the 0-100 quality scale
/// used for desk-scale labels before noise is added.
pub fn desk_quality(severity: usize) -> f64 {
    92.0 - 20.0 * (severity as f64 - 1.0)
}

#[derive(Debug, Clone)]
pub struct DeskVariant {
    pub severity: usize,
    pub clip: VideoClip,
    /// Noisy subjective score on [0, 100].
    pub mos: f64,
}

#[derive(Debug, Clone)]
pub struct DeskScene {
    pub content_id: String,
    pub category: Category,
    pub family: Family,
    pub reference: VideoClip,
    pub variants: Vec<DeskVariant>,
}

#[derive(Debug, Clone, Copy)]
pub struct DeskConfig {
    pub scenes: usize,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub label_noise: f64,
}

impl Default for DeskConfig {
    fn default() -> Self {
        DeskConfig {
            scenes: 12,
            width: 64,
            height: 64,
            frames: 3,
            label_noise: 3.0,
        }
    }
}

/// Scenes cycle through the three categories (night scenes darker and lower
/// contrast, bad weather hazier) and the three distortion families in a
/// Latin-square order, so every category sees every family; each scene gets
/// four severities. Labels are [`desk_quality`] plus seeded
/// Gaussian noise, clamped to [0, 100].
pub fn desk_dataset(config: &DeskConfig, seed: u64) -> Vec<DeskScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.label_noise).expect("valid sigma");
    (0..config.scenes)
        .map(|s| {
            let category = Category::ALL[s % 3];
            let family = Family::ALL[(s + s / 3) % 3];
            let (mean, contrast) = match category {
                Category::DayGood => (130.0, 80.0),
                Category::DayBad => (140.0, 45.0),
                Category::NightGood => (60.0, 40.0),
            };
            let scene_seed = seed.wrapping_mul(1_000_003).wrapping_add(s as u64);
            let step = 1 + s % 3;
            let planes = panning_clip(
                config.width,
                config.height,
                config.frames,
                step,
                scene_seed,
                mean,
                contrast,
            );
            let reference = clip_from_planes(&planes, scene_seed);
            let variants = family
                .levels()
                .iter()
                .enumerate()
                .map(|(k, &level)| {
                    let distorted: Vec<Plane> = planes
                        .iter()
                        .enumerate()
                        .map(|(t, p)| family.apply(p, level, scene_seed ^ (t as u64 + 77)))
                        .collect();
                    let severity = k + 1;
                    DeskVariant {
                        severity,
                        clip: clip_from_planes(&distorted, scene_seed),
                        mos: (desk_quality(severity) + noise.sample(&mut rng)).clamp(0.0, 100.0),
                    }
                })
                .collect();
            DeskScene {
                content_id: format!("scene{s:02}"),
                category,
                family,
                reference,
                variants,
            }
        })
        .collect()
}

/// Likert answers (1-5) for `raters x items` whose grand mean on the 0-100
/// scale is as close to `target` as integer answers allow.
pub fn likert_answers(target: f64, raters: usize, items: usize, seed: u64) -> Vec<Vec<u8>> {
    let raw_target = (target / 25.0 + 1.0).clamp(1.0, 5.0);
    let cells = raters * items;
    let total = (raw_target * cells as f64).round() as usize;
    let base = (total / cells).clamp(1, 5);
    let mut extra = total.saturating_sub(base * cells).min(cells);
    let mut order: Vec<usize> = (0..cells).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..cells).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut flat = vec![base as u8; cells];
    for &i in &order {
        if extra == 0 {
            break;
        }
        if flat[i] < 5 {
            flat[i] += 1;
            extra -= 1;
        }
    }
    flat.chunks(items).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_are_deterministic_and_in_range() {
        let a = fixed_textures(64);
        let b = fixed_textures(64);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
            assert!(x.data().iter().all(|v| (0.0..=255.0).contains(v)));
        }
    }

    #[test]
    fn distortions_change_the_plane() {
        let t = &fixed_textures(64)[0];
        for f in Family::ALL {
            assert_ne!(&f.apply(t, f.levels()[3], 1), t);
        }
    }

    #[test]
    fn likert_mean_tracks_target() {
        for target in [0.0, 12.5, 50.0, 73.3, 100.0] {
            let a = likert_answers(target, 15, 3, 4);
            let n = 45.0;
            let mean: f64 = a.iter().flatten().map(|&v| f64::from(v)).sum::<f64>() / n;
            assert!(((mean - 1.0) * 25.0 - target).abs() <= 25.0 / n);
        }
    }

    #[test]
    fn desk_dataset_shape() {
        let d = desk_dataset(&DeskConfig::default(), 5);
        assert_eq!(d.len(), 12);
        assert!(d.iter().all(|s| s.variants.len() == 4));
    }
}
