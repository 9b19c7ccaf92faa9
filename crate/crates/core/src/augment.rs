//! Stochastic training-time augmentation: horizontal flip, rotation,
//! zoom, and vertical/horizontal translation, applied in that fixed
//! order and deterministic under a seed.
//!
//! Unit convention: `rotation_factor` is a fraction of a full turn, so
//! 0.2 means angles drawn uniformly from ±0.2·2π = ±72°. (It is *not*
//! radians; see the README.) All resampling transforms use bilinear
//! interpolation with edge-repeating reflect padding and preserve the
//! input dimensions. [`apply_augmentation`] consumes exactly five
//! uniform draws per call — flip, angle, zoom, vertical shift,
//! horizontal shift — regardless of which stages are enabled, so the
//! stream position never depends on the configuration.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::fmath;
use crate::imaging::{sample_bilinear_reflect, ImageBuffer};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AugmentConfig {
    pub horizontal_flip: bool,
    /// Fraction of a full turn; 0.2 draws angles in ±72°.
    pub rotation_factor: f64,
    pub zoom_factor: f64,
    pub height_factor: f64,
    pub width_factor: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            horizontal_flip: true,
            rotation_factor: 0.2,
            zoom_factor: 0.2,
            height_factor: 0.2,
            width_factor: 0.2,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, v) in [
            ("rotation_factor", self.rotation_factor),
            ("zoom_factor", self.zoom_factor),
            ("height_factor", self.height_factor),
            ("width_factor", self.width_factor),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(AugmentError::InvalidFactor(format!("{name} = {v} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AugmentError {
    NonPositiveScale(f64),
    InvalidFactor(String),
}

impl fmt::Display for AugmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentError::NonPositiveScale(s) => write!(f, "zoom scale must be positive, got {s}"),
            AugmentError::InvalidFactor(m) => write!(f, "invalid augment factor: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AugmentError {}

/// Exact column mirror.
pub fn flip_horizontal(img: &ImageBuffer) -> ImageBuffer {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                data.push(img.get(w - 1 - x, y, c));
            }
        }
    }
    ImageBuffer::new(w, h, ch, data).expect("flip of a valid buffer is valid")
}

/// Resamples through the inverse of an affine map `p -> A(p - c) + c`
/// over pixel centers, with reflect padding. `inv` takes centered output
/// coordinates to centered source coordinates.
fn warp_about_center(img: &ImageBuffer, inv: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            // Back to index space: pixel i has center i + 0.5.
            let (sx, sy) = (sx + cx - 0.5, sy + cy - 0.5);
            for c in 0..ch {
                data.push(sample_bilinear_reflect(img, sx, sy, c) as f32);
            }
        }
    }
    ImageBuffer::new(w, h, ch, data).expect("warp of a valid buffer is valid")
}

/// Rotation about the image center; `angle == 0.0` is an exact pass-through.
pub fn rotate(img: &ImageBuffer, angle: f64) -> ImageBuffer {
    if angle == 0.0 {
        return img.clone();
    }
    let (cos_t, sin_t) = (fmath::cos(angle), fmath::sin(angle));
    warp_about_center(img, |dx, dy| (cos_t * dx + sin_t * dy, -sin_t * dx + cos_t * dy))
}

/// Zoom about the center; `scale > 1` magnifies. `scale == 1.0` is an
/// exact pass-through.
pub fn zoom(img: &ImageBuffer, scale: f64) -> Result<ImageBuffer, AugmentError> {
    if !(scale > 0.0) {
        return Err(AugmentError::NonPositiveScale(scale));
    }
    if scale == 1.0 {
        return Ok(img.clone());
    }
    Ok(warp_about_center(img, |dx, dy| (dx / scale, dy / scale)))
}

/// Shift by `(dx, dy)` pixels (content moves right/down for positive
/// values) with reflect padding. `(0, 0)` is an exact pass-through.
pub fn translate(img: &ImageBuffer, dx: f64, dy: f64) -> ImageBuffer {
    if dx == 0.0 && dy == 0.0 {
        return img.clone();
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                data.push(sample_bilinear_reflect(img, x as f64 - dx, y as f64 - dy, c) as f32);
            }
        }
    }
    ImageBuffer::new(w, h, ch, data).expect("translate of a valid buffer is valid")
}

/// Applies the augmentation stages in order: flip (p = 0.5 when
/// enabled), rotation, zoom, vertical translation, horizontal
/// translation. Identical `(img, cfg, rng state)` triples produce
/// identical outputs.
pub fn apply_augmentation(
    img: &ImageBuffer,
    cfg: &AugmentConfig,
    rng: &mut SplitMix64,
) -> Result<ImageBuffer, AugmentError> {
    cfg.validate()?;
    let u_flip = rng.next_f64();
    let u_rot = rng.next_f64();
    let u_zoom = rng.next_f64();
    let u_dy = rng.next_f64();
    let u_dx = rng.next_f64();

    let mut out = if cfg.horizontal_flip && u_flip < 0.5 {
        flip_horizontal(img)
    } else {
        img.clone()
    };
    if cfg.rotation_factor > 0.0 {
        let angle = (2.0 * u_rot - 1.0) * cfg.rotation_factor * 2.0 * PI;
        out = rotate(&out, angle);
    }
    if cfg.zoom_factor > 0.0 {
        let scale = 1.0 + (2.0 * u_zoom - 1.0) * cfg.zoom_factor;
        out = zoom(&out, scale)?;
    }
    if cfg.height_factor > 0.0 {
        let dy = (2.0 * u_dy - 1.0) * cfg.height_factor * img.height() as f64;
        out = translate(&out, 0.0, dy);
    }
    if cfg.width_factor > 0.0 {
        let dx = (2.0 * u_dx - 1.0) * cfg.width_factor * img.width() as f64;
        out = translate(&out, dx, 0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn random_image(seed: u64, w: u32, h: u32, ch: u32) -> ImageBuffer {
        let mut rng = SplitMix64::new(seed);
        let n = (w * h * ch) as usize;
        let data = (0..n).map(|_| rng.next_f64() as f32).collect();
        ImageBuffer::new(w, h, ch, data).unwrap()
    }

    fn identity_config() -> AugmentConfig {
        AugmentConfig {
            horizontal_flip: false,
            rotation_factor: 0.0,
            zoom_factor: 0.0,
            height_factor: 0.0,
            width_factor: 0.0,
            seed: 0,
        }
    }

    /// Seed whose first uniform draw falls below 0.5, forcing the flip.
    fn flip_forcing_seed() -> u64 {
        (0..)
            .find(|&s| SplitMix64::new(s).next_f64() < 0.5)
            .unwrap()
    }

    #[test]
    fn identity_config_is_bitwise_noop() {
        let img = random_image(1, 9, 7, 3);
        let mut rng = SplitMix64::new(42);
        let out = apply_augmentation(&img, &identity_config(), &mut rng).unwrap();
        assert_eq!(img.data(), out.data());
    }

    #[test]
    fn flip_only_mirrors() {
        let img = ImageBuffer::new(2, 1, 1, vec![0.25, 0.75]).unwrap();
        let mut cfg = identity_config();
        cfg.horizontal_flip = true;
        let seed = flip_forcing_seed();
        let mut rng = SplitMix64::new(seed);
        let out = apply_augmentation(&img, &cfg, &mut rng).unwrap();
        assert_eq!(out.data(), &[0.75, 0.25]);
    }

    #[test]
    fn flip_is_an_involution() {
        let img = random_image(5, 13, 8, 3);
        assert_eq!(flip_horizontal(&flip_horizontal(&img)).data(), img.data());
    }

    #[test]
    fn rotate_zero_is_exact_identity() {
        let img = random_image(6, 10, 10, 1);
        assert_eq!(rotate(&img, 0.0).data(), img.data());
    }

    #[test]
    fn quarter_turn_matches_index_permutation() {
        let n = 16u32;
        let img = random_image(7, n, n, 1);
        let rotated = rotate(&img, PI / 2.0);
        // Quarter turn on a square: out(x, y) = in(y, n-1-x).
        for y in 0..n {
            for x in 0..n {
                let expected = img.get(y, n - 1 - x, 0);
                let got = rotated.get(x, y, 0);
                assert!(
                    (expected - got).abs() <= 1e-5,
                    "({x},{y}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn rotate_round_trip_is_close_on_smooth_images() {
        // Low-frequency image: bilinear round trip should nearly cancel.
        let n = 32u32;
        let data: Vec<f32> = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64, (i / n) as f64);
                (0.5 + 0.2 * fmath::sin(2.0 * PI * x / n as f64)
                    + 0.2 * fmath::cos(2.0 * PI * y / n as f64)) as f32
            })
            .collect();
        let img = ImageBuffer::new(n, n, 1, data).unwrap();
        let theta = 0.3;
        let back = rotate(&rotate(&img, theta), -theta);
        let mean_abs: f64 = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / img.data().len() as f64;
        assert!(mean_abs < 2e-2, "mean abs error {mean_abs}");
    }

    #[test]
    fn translate_by_width_fully_reflects_columns() {
        let img = random_image(8, 4, 4, 1);
        let out = translate(&img, 4.0, 0.0);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(out.get(x, y, 0), img.get(3 - x, y, 0));
            }
        }
    }

    #[test]
    fn zoom_rejects_non_positive_scale() {
        let img = random_image(9, 4, 4, 1);
        assert!(matches!(zoom(&img, 0.0), Err(AugmentError::NonPositiveScale(_))));
        assert!(matches!(zoom(&img, -1.0), Err(AugmentError::NonPositiveScale(_))));
    }

    #[test]
    fn transforms_preserve_dimensions() {
        let img = random_image(10, 11, 6, 3);
        for out in [
            flip_horizontal(&img),
            rotate(&img, 0.7),
            zoom(&img, 1.3).unwrap(),
            zoom(&img, 0.8).unwrap(),
            translate(&img, 1.5, -2.25),
        ] {
            assert_eq!(
                (out.width(), out.height(), out.channels()),
                (img.width(), img.height(), img.channels())
            );
        }
    }

    #[test]
    fn config_rejects_out_of_range_factors() {
        let mut cfg = AugmentConfig::default();
        cfg.rotation_factor = 1.0;
        assert!(cfg.validate().is_err());
        cfg.rotation_factor = -0.1;
        assert!(cfg.validate().is_err());
    }

    fn fnv1a(bytes: impl Iterator<Item = u8>) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    #[test]
    fn augmentation_fixed_point_over_ten_seeds() {
        // Frozen digests guard the cross-run / cross-platform
        // determinism contract; any drift in RNG, sampling, or stage
        // order shows up here.
        let expected: Vec<u64> = vec![
            16568535416624098399,
            7048757651713249891,
            8925617686401539021,
            4838700523785261858,
            10581735980448818393,
            12793879852563816395,
            3357423768024728891,
            2284958239798373731,
            1683954632319760674,
            9740670973667686512,
        ];
        let img = random_image(1234, 12, 12, 3);
        let cfg = AugmentConfig::default();
        let got: Vec<u64> = (0..10)
            .map(|seed| {
                let mut rng = SplitMix64::new(seed);
                let out = apply_augmentation(&img, &cfg, &mut rng).unwrap();
                fnv1a(out.data().iter().flat_map(|v| v.to_le_bytes()))
            })
            .collect();
        assert_eq!(got, expected, "augmentation digests drifted");
    }

    #[test]
    fn same_state_same_output() {
        let img = random_image(2, 16, 16, 3);
        let cfg = AugmentConfig::default();
        let mut r1 = SplitMix64::new(99);
        let mut r2 = SplitMix64::new(99);
        let a = apply_augmentation(&img, &cfg, &mut r1).unwrap();
        let b = apply_augmentation(&img, &cfg, &mut r2).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(r1, r2);
    }
}
