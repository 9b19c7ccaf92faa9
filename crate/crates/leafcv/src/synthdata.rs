//! Deterministic synthetic leaf-disease image generator. Four classes
//! with texture- and orientation-coded lesions on a green noisy leaf
//! background:
//!
//! * `brown_spot` — 3..=7 dark elliptical blobs with bright halos
//! * `healthy` — background only
//! * `leaf_blast` — 1..=3 elongated diagonal (about 45 degrees) streaks
//! * `neck_blast` — a dark ragged horizontal band in the upper third
//!
//! Every image draws from its own seed-split stream, so generation
//! order (or parallelism) cannot change pixel content, and output is
//! byte-identical for identical configs.

use std::fs;
use std::path::Path;

use leafcv_core::imaging::ImageBuffer;
use leafcv_core::rng::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::save_pnm;
use crate::error::{PipelineError, Result};

/// Fixed class taxonomy in lexicographic (= id) order.
pub const CLASS_NAMES: [&str; 4] = ["brown_spot", "healthy", "leaf_blast", "neck_blast"];

/// Real per-class counts from the source dataset, used as proportions
/// by the imbalanced mode (per 1000 base samples).
const IMBALANCED_WEIGHTS: [u64; 4] = [613, 1488, 977, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub per_class: usize,
    pub image_size: u32,
    pub seed: u64,
    /// Record planted-lesion bounding boxes in the manifest.
    pub lesion_logging: bool,
    /// Scale per-class counts by the source dataset's class proportions
    /// instead of generating balanced classes.
    pub imbalanced: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            per_class: 50,
            image_size: 64,
            seed: 0,
            lesion_logging: true,
            imbalanced: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class < 1 {
            return Err(PipelineError::usage("per_class must be at least 1"));
        }
        if self.image_size < 32 {
            return Err(PipelineError::usage("image_size must be at least 32"));
        }
        Ok(())
    }

    /// Number of images generated for each class id.
    pub fn class_counts(&self) -> [usize; 4] {
        if self.imbalanced {
            IMBALANCED_WEIGHTS.map(|w| {
                (((self.per_class as u64) * w + 500) / 1000).max(1) as usize
            })
        } else {
            [self.per_class; 4]
        }
    }
}

/// Axis-aligned pixel rectangle around a planted lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LesionBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub path: String,
    pub class_id: usize,
    pub class_name: String,
    pub lesion_boxes: Vec<LesionBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub image_size: u32,
    pub seed: u64,
    pub records: Vec<SynthRecord>,
}

/// Renders the configured dataset under `out_dir` in a
/// directory-per-class layout plus `manifest.json`.
pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthManifest> {
    cfg.validate()?;
    let counts = cfg.class_counts();
    for name in CLASS_NAMES {
        fs::create_dir_all(out_dir.join(name))
            .map_err(|e| PipelineError::io(out_dir.join(name), e))?;
    }

    // (class_id, index-within-class, global index) for every image.
    let mut jobs = Vec::new();
    let mut global = 0u64;
    for (class_id, &count) in counts.iter().enumerate() {
        for index in 0..count {
            jobs.push((class_id, index, global));
            global += 1;
        }
    }

    let base = SplitMix64::new(cfg.seed);
    let rendered: Vec<Result<SynthRecord>> = jobs
        .par_iter()
        .map(|&(class_id, index, global)| {
            let mut rng = base.split_stream(global);
            let (img, boxes) = render_image(class_id, cfg.image_size, &mut rng);
            let rel = format!("{}/{index}.ppm", CLASS_NAMES[class_id]);
            save_pnm(&out_dir.join(&rel), &img)?;
            Ok(SynthRecord {
                path: rel,
                class_id,
                class_name: CLASS_NAMES[class_id].to_string(),
                lesion_boxes: if cfg.lesion_logging { boxes } else { Vec::new() },
            })
        })
        .collect();

    let mut records = Vec::with_capacity(rendered.len());
    for r in rendered {
        records.push(r?);
    }
    let manifest = SynthManifest { image_size: cfg.image_size, seed: cfg.seed, records };
    let json = serde_json::to_string_pretty(&manifest)
        .expect("manifest serialization cannot fail");
    fs::write(out_dir.join("manifest.json"), json)
        .map_err(|e| PipelineError::io(out_dir.join("manifest.json"), e))?;
    Ok(manifest)
}

/// Renders one image and the bounding boxes of its planted lesions.
pub fn render_image(
    class_id: usize,
    size: u32,
    rng: &mut SplitMix64,
) -> (ImageBuffer, Vec<LesionBox>) {
    let mut canvas = Canvas::background(size, rng);
    let boxes = match CLASS_NAMES[class_id] {
        "brown_spot" => canvas.brown_spots(rng),
        "healthy" => Vec::new(),
        "leaf_blast" => canvas.blast_streaks(rng),
        "neck_blast" => canvas.neck_band(rng),
        _ => unreachable!("class ids are dense in [0, 4)"),
    };
    (canvas.finish(), boxes)
}

/// RGB float canvas with alpha-blend painting.
struct Canvas {
    size: u32,
    data: Vec<f32>, // interleaved rgb
}

impl Canvas {
    /// Green leaf base: soft vein striping, per-pixel brightness noise,
    /// and a per-image global brightness jitter.
    fn background(size: u32, rng: &mut SplitMix64) -> Canvas {
        let n = size as usize;
        let brightness = 1.0 + rng.uniform(-0.12, 0.12);
        let vein_freq = rng.uniform(2.0, 4.5);
        let vein_phase = rng.uniform(0.0, std::f64::consts::TAU);
        let mut data = Vec::with_capacity(n * n * 3);
        for y in 0..n {
            for x in 0..n {
                let along = (x as f64 * 0.92 + y as f64 * 0.38) / size as f64;
                let vein =
                    0.035 * (std::f64::consts::TAU * vein_freq * along + vein_phase).sin();
                let noise = rng.uniform(-0.035, 0.035);
                let l = (brightness * (1.0 + vein + noise)) as f32;
                data.push((0.21 * l).clamp(0.0, 1.0));
                data.push((0.46 * l).clamp(0.0, 1.0));
                data.push((0.16 * l).clamp(0.0, 1.0));
            }
        }
        Canvas { size, data }
    }

    fn blend(&mut self, x: usize, y: usize, color: [f64; 3], alpha: f64) {
        let i = (y * self.size as usize + x) * 3;
        for c in 0..3 {
            let old = self.data[i + c] as f64;
            self.data[i + c] = (old + alpha * (color[c] - old)) as f32;
        }
    }

    fn finish(self) -> ImageBuffer {
        ImageBuffer::new(self.size, self.size, 3, self.data)
            .expect("canvas stays in the unit interval")
    }

    fn clamp_box(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> LesionBox {
        let s = (self.size - 1) as f64;
        let x0 = x0.floor().clamp(0.0, s) as u32;
        let y0 = y0.floor().clamp(0.0, s) as u32;
        let x1 = x1.ceil().clamp(0.0, s) as u32;
        let y1 = y1.ceil().clamp(0.0, s) as u32;
        LesionBox { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 }
    }

    /// 3..=7 dark ellipses, each ringed by a brighter halo.
    fn brown_spots(&mut self, rng: &mut SplitMix64) -> Vec<LesionBox> {
        let s = self.size as f64;
        let count = 3 + rng.next_below(5) as usize;
        let mut boxes = Vec::with_capacity(count);
        for _ in 0..count {
            let cx = rng.uniform(0.15 * s, 0.85 * s);
            let cy = rng.uniform(0.15 * s, 0.85 * s);
            let rx = rng.uniform(0.05 * s, 0.11 * s);
            let ry = rng.uniform(0.05 * s, 0.11 * s);
            let halo = 1.45;
            boxes.push(self.clamp_box(
                cx - rx * halo,
                cy - ry * halo,
                cx + rx * halo,
                cy + ry * halo,
            ));
            let (x0, y0, x1, y1) = pixel_span(cx, cy, rx * halo, ry * halo, self.size);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    let d = (dx * dx + dy * dy).sqrt();
                    if d <= 1.0 {
                        // Dark brown core, strongest at the center.
                        let a = 0.9 * (1.0 - 0.3 * d);
                        self.blend(x, y, [0.24, 0.10, 0.04], a);
                    } else if d <= halo {
                        // Bright chlorotic ring fading outward.
                        let a = 0.55 * (1.0 - (d - 1.0) / (halo - 1.0));
                        self.blend(x, y, [0.80, 0.74, 0.30], a);
                    }
                }
            }
        }
        boxes
    }

    /// 1..=3 dark tapered streaks along one of the two diagonals.
    fn blast_streaks(&mut self, rng: &mut SplitMix64) -> Vec<LesionBox> {
        let s = self.size as f64;
        let count = 1 + rng.next_below(3) as usize;
        let mut boxes = Vec::with_capacity(count);
        for _ in 0..count {
            let cx = rng.uniform(0.25 * s, 0.75 * s);
            let cy = rng.uniform(0.25 * s, 0.75 * s);
            let base = if rng.next_below(2) == 0 {
                std::f64::consts::FRAC_PI_4
            } else {
                3.0 * std::f64::consts::FRAC_PI_4
            };
            let theta = base + rng.uniform(-0.10, 0.10);
            let half_len = rng.uniform(0.20 * s, 0.32 * s);
            let half_thick = rng.uniform(0.025 * s, 0.045 * s).max(1.4);
            let (ux, uy) = (theta.cos(), theta.sin());
            let reach_x = ux.abs() * half_len + half_thick + 1.0;
            let reach_y = uy.abs() * half_len + half_thick + 1.0;
            boxes.push(self.clamp_box(cx - reach_x, cy - reach_y, cx + reach_x, cy + reach_y));
            let (x0, y0, x1, y1) = pixel_span(cx, cy, reach_x, reach_y, self.size);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let px = x as f64 + 0.5 - cx;
                    let py = y as f64 + 0.5 - cy;
                    let along = px * ux + py * uy;
                    let across = (px * uy - py * ux).abs();
                    if along.abs() > half_len {
                        continue;
                    }
                    // Width tapers toward the tips.
                    let t = half_thick * (1.0 - 0.6 * (along / half_len).powi(2));
                    let a = 0.85 * (t - across + 0.5).clamp(0.0, 1.0);
                    if a > 0.0 {
                        self.blend(x, y, [0.30, 0.15, 0.06], a);
                    }
                }
            }
        }
        boxes
    }

    /// One dark ragged horizontal band in the upper third.
    fn neck_band(&mut self, rng: &mut SplitMix64) -> Vec<LesionBox> {
        let s = self.size as f64;
        let top = rng.uniform(0.05 * s, 0.17 * s);
        let height = rng.uniform(0.07 * s, 0.12 * s);
        let ripple = s * 0.015;
        let freq_top = rng.uniform(2.0, 5.0);
        let freq_bot = rng.uniform(2.0, 5.0);
        let phase_top = rng.uniform(0.0, std::f64::consts::TAU);
        let phase_bot = rng.uniform(0.0, std::f64::consts::TAU);

        let boxes = vec![self.clamp_box(
            0.0,
            top - ripple - 1.0,
            s - 1.0,
            top + height + ripple + 1.0,
        )];
        for x in 0..self.size as usize {
            let u = x as f64 / s;
            let edge_top =
                top + ripple * (std::f64::consts::TAU * freq_top * u + phase_top).sin();
            let edge_bot = top
                + height
                + ripple * (std::f64::consts::TAU * freq_bot * u + phase_bot).sin();
            for y in 0..self.size as usize {
                let yc = y as f64 + 0.5;
                // Soft-edged interval [edge_top, edge_bot].
                let a = 0.85
                    * ((yc - edge_top + 0.5).clamp(0.0, 1.0)
                        * (edge_bot - yc + 0.5).clamp(0.0, 1.0));
                if a > 0.0 {
                    self.blend(x, y, [0.22, 0.12, 0.05], a);
                }
            }
        }
        boxes
    }
}

/// Integer pixel range covering `center ± reach`, clamped to the image.
fn pixel_span(cx: f64, cy: f64, rx: f64, ry: f64, size: u32) -> (usize, usize, usize, usize) {
    let s = (size - 1) as f64;
    (
        (cx - rx).floor().clamp(0.0, s) as usize,
        (cy - ry).floor().clamp(0.0, s) as usize,
        (cx + rx).ceil().clamp(0.0, s) as usize,
        (cy + ry).ceil().clamp(0.0, s) as usize,
    )
}
