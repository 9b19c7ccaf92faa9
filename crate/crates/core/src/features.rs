//! HOG and LBP descriptor extraction, plus raw-pixel flattening as the
//! baseline representation.
//!
//! HOG follows Dalal-Triggs: centered [-1, 0, 1] gradients with border
//! replication, orientation-binned cell histograms (hard spatial
//! assignment, soft orientation vote between the two nearest bin
//! centers with circular wrap), and L2-Hys block normalization.
//!
//! LBP samples `points` neighbors on a circle of `radius` (neighbor k
//! sits at angle 2πk/points, x along +cos, y along +sin) via bilinear
//! interpolation with reflect padding; uniform coding maps patterns
//! with at most two circular transitions to their popcount and all
//! others to `points + 1`, so the code image keeps full input
//! dimensions and flattens directly into the feature vector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::fmath;
use crate::imaging::{sample_bilinear_reflect, to_grayscale, ImageBuffer};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureError {
    /// Image cannot host the requested descriptor geometry.
    ImageTooSmall(String),
    InvalidParams(String),
    /// Descriptors operate on single-channel input.
    NotGrayscale { channels: u32 },
}

impl fmt::Display for FeatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureError::ImageTooSmall(m) => write!(f, "image too small: {m}"),
            FeatureError::InvalidParams(m) => write!(f, "invalid parameters: {m}"),
            FeatureError::NotGrayscale { channels } => {
                write!(f, "expected 1-channel input, got {channels}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FeatureError {}

/// Histogram-of-oriented-gradients parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct HogParams {
    pub orientations: u32,
    /// Pixels per cell side (square cells).
    pub cell_size: u32,
    /// Cells per block side (square blocks).
    pub block_size: u32,
    /// Block step in cells.
    pub block_stride: u32,
    /// L2-Hys clip threshold.
    pub l2_hys_clip: f64,
    /// `false` bins orientations over [0°, 180°), `true` over [0°, 360°).
    pub signed_gradients: bool,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams {
            orientations: 9,
            cell_size: 14,
            block_size: 2,
            block_stride: 1,
            l2_hys_clip: 0.2,
            signed_gradients: false,
        }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.orientations < 1 {
            return Err(FeatureError::InvalidParams("orientations must be >= 1".into()));
        }
        if self.cell_size < 2 {
            return Err(FeatureError::InvalidParams("cell_size must be >= 2".into()));
        }
        if self.block_size < 1 || self.block_stride < 1 {
            return Err(FeatureError::InvalidParams(
                "block_size and block_stride must be >= 1".into(),
            ));
        }
        if !(self.l2_hys_clip > 0.0) {
            return Err(FeatureError::InvalidParams("l2_hys_clip must be positive".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        fingerprint_str(&format!(
            "hog;orientations={};cell_size={};block_size={};block_stride={};clip={};signed={}",
            self.orientations,
            self.cell_size,
            self.block_size,
            self.block_stride,
            self.l2_hys_clip,
            self.signed_gradients
        ))
    }
}

/// Local-binary-pattern parameters. Only the uniform coding is
/// supported.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LbpParams {
    pub radius: u32,
    pub points: u32,
    pub method: LbpMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LbpMethod {
    #[default]
    Uniform,
}

impl Default for LbpParams {
    fn default() -> Self {
        LbpParams {
            radius: 3,
            points: 24,
            method: LbpMethod::Uniform,
        }
    }
}

impl LbpParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.radius < 1 {
            return Err(FeatureError::InvalidParams("radius must be >= 1".into()));
        }
        if self.points < 4 {
            return Err(FeatureError::InvalidParams("points must be >= 4".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        fingerprint_str(&format!(
            "lbp;radius={};points={};method=uniform",
            self.radius, self.points
        ))
    }
}

/// Fingerprint for the raw (grayscale flatten) representation.
pub fn raw_fingerprint() -> [u8; 32] {
    fingerprint_str("raw")
}

fn fingerprint_str(s: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(s.as_bytes());
    hasher.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FeatureKind {
    Hog,
    Lbp,
    Raw,
}

/// Dense descriptor tagged with which extractor produced it and a
/// stable hash of that extractor's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    kind: FeatureKind,
    values: Vec<f32>,
    params_fingerprint: [u8; 32],
}

impl FeatureVector {
    pub fn new(kind: FeatureKind, values: Vec<f32>, params_fingerprint: [u8; 32]) -> Self {
        FeatureVector { kind, values, params_fingerprint }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn params_fingerprint(&self) -> &[u8; 32] {
        &self.params_fingerprint
    }
}

/// Per-pixel gradient magnitude and orientation, row-major.
/// Orientations lie in [0, π) unsigned or [0, 2π) signed.
pub struct GradientField {
    pub width: u32,
    pub height: u32,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

/// Centered-difference gradients with border replication:
/// `gx = (I(x+1) - I(x-1)) / 2`, likewise for `gy`.
pub fn compute_gradients(gray: &ImageBuffer, signed: bool) -> GradientField {
    assert_eq!(gray.channels(), 1, "gradients require grayscale input");
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let at = |x: i64, y: i64| -> f64 {
        gray.get(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32, 0) as f64
    };
    let n = (w * h) as usize;
    let mut magnitude = Vec::with_capacity(n);
    let mut orientation = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            magnitude.push(fmath::sqrt(gx * gx + gy * gy));
            let mut theta = fmath::atan2(gy, gx);
            let range = if signed { 2.0 * PI } else { PI };
            if theta < 0.0 {
                theta += range;
            }
            if theta >= range {
                theta -= range;
            }
            orientation.push(theta);
        }
    }
    GradientField {
        width: gray.width(),
        height: gray.height(),
        magnitude,
        orientation,
    }
}

/// HOG output length for an image of the given size, or an error if the
/// image cannot host at least one block.
pub fn hog_feature_len(p: &HogParams, width: u32, height: u32) -> Result<usize, FeatureError> {
    p.validate()?;
    let n_cx = width / p.cell_size;
    let n_cy = height / p.cell_size;
    if n_cx < p.block_size || n_cy < p.block_size {
        return Err(FeatureError::ImageTooSmall(format!(
            "{width}x{height} yields {n_cx}x{n_cy} cells, need at least {0}x{0} for one block",
            p.block_size
        )));
    }
    let n_bx = ((n_cx - p.block_size) / p.block_stride + 1) as usize;
    let n_by = ((n_cy - p.block_size) / p.block_stride + 1) as usize;
    Ok(n_bx * n_by * (p.block_size as usize).pow(2) * p.orientations as usize)
}

pub fn hog_extract(gray: &ImageBuffer, p: &HogParams) -> Result<FeatureVector, FeatureError> {
    if gray.channels() != 1 {
        return Err(FeatureError::NotGrayscale { channels: gray.channels() });
    }
    let expected_len = hog_feature_len(p, gray.width(), gray.height())?;

    let grads = compute_gradients(gray, p.signed_gradients);
    let w = gray.width() as usize;
    let cell = p.cell_size as usize;
    let bins = p.orientations as usize;
    let range = if p.signed_gradients { 2.0 * PI } else { PI };
    let bin_width = range / bins as f64;
    let n_cx = (gray.width() / p.cell_size) as usize;
    let n_cy = (gray.height() / p.cell_size) as usize;

    // Cell histograms; pixels beyond the cell grid are ignored.
    let mut hist = vec![0.0f64; n_cx * n_cy * bins];
    for y in 0..n_cy * cell {
        for x in 0..n_cx * cell {
            let m = grads.magnitude[y * w + x];
            let pos = grads.orientation[y * w + x] / bin_width - 0.5;
            let i0 = fmath::floor(pos);
            let frac = pos - i0;
            let lo = (i0 as i64).rem_euclid(bins as i64) as usize;
            let hi = (i0 as i64 + 1).rem_euclid(bins as i64) as usize;
            let base = ((y / cell) * n_cx + (x / cell)) * bins;
            hist[base + lo] += m * (1.0 - frac);
            hist[base + hi] += m * frac;
        }
    }

    let block = p.block_size as usize;
    let stride = p.block_stride as usize;
    let n_bx = (n_cx - block) / stride + 1;
    let n_by = (n_cy - block) / stride + 1;
    let block_len = block * block * bins;
    let mut out = Vec::with_capacity(expected_len);
    let mut v = vec![0.0f64; block_len];
    for by in 0..n_by {
        for bx in 0..n_bx {
            let mut i = 0;
            for cy in 0..block {
                for cx in 0..block {
                    let base = ((by * stride + cy) * n_cx + (bx * stride + cx)) * bins;
                    v[i..i + bins].copy_from_slice(&hist[base..base + bins]);
                    i += bins;
                }
            }
            l2_hys(&mut v, p.l2_hys_clip);
            out.extend(v.iter().map(|&a| a as f32));
        }
    }
    debug_assert_eq!(out.len(), expected_len);
    Ok(FeatureVector::new(FeatureKind::Hog, out, p.fingerprint()))
}

/// L2 normalize, clip, renormalize; a zero vector stays zero.
fn l2_hys(v: &mut [f64], clip: f64) {
    let norm = fmath::sqrt(v.iter().map(|a| a * a).sum::<f64>());
    if norm > 0.0 {
        for a in v.iter_mut() {
            *a /= norm;
        }
    }
    for a in v.iter_mut() {
        if *a > clip {
            *a = clip;
        }
    }
    let norm = fmath::sqrt(v.iter().map(|a| a * a).sum::<f64>());
    if norm > 0.0 {
        for a in v.iter_mut() {
            *a /= norm;
        }
    }
}

/// Per-pixel LBP codes at full input resolution. Codes are integers in
/// `[0, points + 1]`: uniform patterns map to their popcount,
/// non-uniform ones to `points + 1`.
pub struct LbpCodeImage {
    width: u32,
    height: u32,
    codes: Vec<u8>,
}

impl LbpCodeImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }
}

pub fn lbp_code_image(gray: &ImageBuffer, p: &LbpParams) -> Result<LbpCodeImage, FeatureError> {
    if gray.channels() != 1 {
        return Err(FeatureError::NotGrayscale { channels: gray.channels() });
    }
    p.validate()?;
    let (w, h) = (gray.width(), gray.height());
    if w <= 2 * p.radius || h <= 2 * p.radius {
        return Err(FeatureError::ImageTooSmall(format!(
            "{w}x{h} too small for radius {}",
            p.radius
        )));
    }
    let points = p.points as usize;
    debug_assert!(points <= 253, "codes must fit in u8");
    // Neighbor offsets are fixed per parameter set. Rounding to eight
    // decimals snaps axis-aligned neighbors onto exact pixel centers,
    // which trig residue (sin(pi) != 0 in floats) would otherwise miss
    // by ~1e-16 and leave comparisons at the mercy of last-ulp rounding.
    let offsets: Vec<(f64, f64)> = (0..points)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / points as f64;
            (
                snap8(p.radius as f64 * fmath::cos(angle)),
                snap8(p.radius as f64 * fmath::sin(angle)),
            )
        })
        .collect();
    let mut codes = Vec::with_capacity((w * h) as usize);
    let mut bits = vec![false; points];
    for y in 0..h {
        for x in 0..w {
            let center = gray.get(x, y, 0) as f64;
            for (bit, (dx, dy)) in bits.iter_mut().zip(&offsets) {
                let sample = sample_bilinear_reflect(gray, x as f64 + dx, y as f64 + dy, 0);
                *bit = sample >= center;
            }
            let transitions = (0..points)
                .filter(|&k| bits[k] != bits[(k + 1) % points])
                .count();
            let code = if transitions <= 2 {
                bits.iter().filter(|&&b| b).count()
            } else {
                points + 1
            };
            codes.push(code as u8);
        }
    }
    Ok(LbpCodeImage { width: w, height: h, codes })
}

/// Round to eight decimal places.
fn snap8(v: f64) -> f64 {
    fmath::floor(v * 1e8 + 0.5) / 1e8
}

/// The LBP feature is the code image flattened row-major (not a
/// histogram), so a 224x224 input yields dim 50176.
pub fn lbp_extract(gray: &ImageBuffer, p: &LbpParams) -> Result<FeatureVector, FeatureError> {
    let code_img = lbp_code_image(gray, p)?;
    let values = code_img.codes.iter().map(|&c| c as f32).collect();
    Ok(FeatureVector::new(FeatureKind::Lbp, values, p.fingerprint()))
}

/// Baseline representation: grayscale then flatten row-major.
pub fn raw_flatten(img: &ImageBuffer) -> FeatureVector {
    let gray = to_grayscale(img);
    FeatureVector::new(FeatureKind::Raw, gray.into_data(), raw_fingerprint())
}
