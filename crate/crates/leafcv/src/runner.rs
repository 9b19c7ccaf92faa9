//! End-to-end orchestration: descriptor extraction over a manifest
//! (with cache reuse), training runs for both the raw-image CNN path
//! and the feature-head paths, evaluation reports, and Grad-CAM batch
//! rendering with lesion-localization statistics.

use std::fs;
use std::path::Path;

use leafcv_core::augment::apply_augmentation;
use leafcv_core::features::{hog_extract, lbp_extract, raw_flatten, FeatureVector};
use leafcv_core::gradcam::{
    gradcam_heatmap, image_to_tensor, render_overlay, upsample_heatmap,
};
use leafcv_core::imaging::{resize_bilinear, to_grayscale, ImageBuffer};
use leafcv_core::metrics::{confusion, report, ConfusionMatrix, MetricReport};
use leafcv_core::nn::{train, Model, Tensor, TrainError};
use leafcv_core::rng::SplitMix64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{read_if_valid, write_cache, CacheRecord};
use crate::checkpoint::Checkpoint;
use crate::codec::{load_image, save_pnm};
use crate::config::{ModelKind, RunConfig};
use crate::dataset::{DatasetManifest, SampleRecord, Split};
use crate::error::{PipelineError, Result};

/// Loads a sample and resizes it to the configured square.
fn load_resized(manifest: &DatasetManifest, sample: &SampleRecord, size: u32) -> Result<ImageBuffer> {
    Ok(resize_bilinear(&load_image(&manifest.resolve(sample))?, size, size))
}

/// Applies the configured descriptor to an already-resized image.
fn descriptor(cfg: &RunConfig, resized: &ImageBuffer) -> Result<FeatureVector> {
    let gray = to_grayscale(resized);
    let fv = match cfg.representation.feature_kind() {
        leafcv_core::features::FeatureKind::Raw => raw_flatten(&gray),
        leafcv_core::features::FeatureKind::Hog => hog_extract(&gray, &cfg.hog)
            .map_err(|e| PipelineError::data(e.to_string()))?,
        leafcv_core::features::FeatureKind::Lbp => lbp_extract(&gray, &cfg.lbp)
            .map_err(|e| PipelineError::data(e.to_string()))?,
    };
    Ok(fv)
}

fn require_split_labels(manifest: &DatasetManifest) -> Result<()> {
    if manifest.samples.iter().any(|s| s.split.is_none()) {
        return Err(PipelineError::usage(
            "manifest has samples without split labels; run ingest with split fractions first",
        ));
    }
    Ok(())
}

/// Extracts descriptors for every sample in the manifest, in manifest
/// order, writing them to `cache_path`. A cache whose kind, dimension,
/// fingerprint, and record count already match is reused as-is.
pub fn extract_features(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    cache_path: &Path,
) -> Result<Vec<CacheRecord>> {
    require_split_labels(manifest)?;
    let dim = cfg.feature_dim()? as u32;
    let fingerprint = cfg.params_fingerprint();
    let kind = cfg.representation.feature_kind();
    if let Some(records) = read_if_valid(cache_path, kind, dim, fingerprint) {
        if records.len() == manifest.samples.len() {
            return Ok(records);
        }
    }

    let aug_base = SplitMix64::new(cfg.augment.seed);
    let extracted: Vec<Result<CacheRecord>> = manifest
        .samples
        .par_iter()
        .enumerate()
        .map(|(index, sample)| {
            let mut resized = load_resized(manifest, sample, cfg.image_size)?;
            if cfg.augment_features {
                let mut rng = aug_base.split_stream(index as u64);
                resized = apply_augmentation(&resized, &cfg.augment, &mut rng)
                    .map_err(|e| PipelineError::usage(e.to_string()))?;
            }
            let fv = descriptor(cfg, &resized)
                .map_err(|e| PipelineError::data(format!("{}: {e}", sample.path)))?;
            Ok(CacheRecord {
                class_id: sample.class_id as u16,
                split: sample.split.expect("split labels checked above"),
                values: fv.into_values(),
            })
        })
        .collect();

    let mut records = Vec::with_capacity(extracted.len());
    for r in extracted {
        records.push(r?);
    }
    write_cache(cache_path, kind, dim, fingerprint, &records)?;
    Ok(records)
}

fn map_train_err(e: TrainError) -> PipelineError {
    match e {
        TrainError::DivergedLoss { epoch, loss } => PipelineError::Diverged(format!(
            "loss became non-finite ({loss}) in epoch {epoch}"
        )),
        TrainError::InvalidConfig(m) => PipelineError::usage(m),
        other => PipelineError::data(other.to_string()),
    }
}

/// Trains the configured model on the manifest's train split and
/// returns the checkpoint plus the validation report (when a val split
/// exists). Raw-image CNN runs re-augment every sample every epoch;
/// feature-head runs train on cached descriptors.
pub fn run_training(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    cache_path: &Path,
) -> Result<(Checkpoint, Option<MetricReport>)> {
    cfg.validate()?;
    require_split_labels(manifest)?;
    let spec = cfg.model_spec(manifest.num_classes())?;
    let mut model =
        Model::build(&spec).map_err(|e| PipelineError::usage(format!("model spec: {e}")))?;

    let history = match cfg.model {
        ModelKind::SmallCnn => {
            let samples = manifest.split_samples(Split::Train);
            let labels: Vec<usize> = samples.iter().map(|s| s.class_id).collect();
            let loaded: Vec<Result<ImageBuffer>> = samples
                .par_iter()
                .map(|s| Ok(to_grayscale(&load_resized(manifest, s, cfg.image_size)?)))
                .collect();
            let mut images = Vec::with_capacity(loaded.len());
            for img in loaded {
                images.push(img?);
            }
            let val = split_tensors_from_images(manifest, cfg, Split::Val)?;
            let aug_base = SplitMix64::new(cfg.augment.seed);
            let provider = |i: usize, epoch: usize| {
                let mut rng = aug_base.split_stream(epoch as u64).split_stream(i as u64);
                let augmented = apply_augmentation(&images[i], &cfg.augment, &mut rng)
                    .expect("augment config was validated");
                image_to_tensor(&augmented)
            };
            train(&mut model, &labels, provider, &cfg.train, as_val_slice(&val))
                .map_err(map_train_err)?
        }
        ModelKind::Linear | ModelKind::Mlp => {
            let records = extract_features(manifest, cfg, cache_path)?;
            let mut labels = Vec::new();
            let mut tensors = Vec::new();
            let mut val = Vec::new();
            for r in &records {
                let t = feature_tensor(r);
                match r.split {
                    Split::Train => {
                        labels.push(r.class_id as usize);
                        tensors.push(t);
                    }
                    Split::Val => val.push((t, r.class_id as usize)),
                    Split::Test => {}
                }
            }
            let provider = |i: usize, _epoch: usize| tensors[i].clone();
            train(&mut model, &labels, provider, &cfg.train, as_val_slice(&Some(val)))
                .map_err(map_train_err)?
        }
    };

    let checkpoint =
        Checkpoint::from_model(&model, manifest.classes.clone(), cfg.clone(), history);
    let val_report = if manifest.split_samples(Split::Val).is_empty() {
        None
    } else {
        let (rep, _) = predict_and_score(&model, cfg, manifest, Split::Val, cache_path)?;
        Some(rep)
    };
    Ok((checkpoint, val_report))
}

fn as_val_slice(val: &Option<Vec<(Tensor, usize)>>) -> Option<&[(Tensor, usize)]> {
    val.as_ref().filter(|v| !v.is_empty()).map(|v| v.as_slice())
}

fn feature_tensor(record: &CacheRecord) -> Tensor {
    Tensor::new(
        vec![record.values.len()],
        record.values.iter().map(|&v| v as f64).collect(),
    )
}

/// Grayscale image tensors plus labels for one split (raw-image runs).
fn split_tensors_from_images(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    split: Split,
) -> Result<Option<Vec<(Tensor, usize)>>> {
    let samples = manifest.split_samples(split);
    if samples.is_empty() {
        return Ok(None);
    }
    let loaded: Vec<Result<(Tensor, usize)>> = samples
        .par_iter()
        .map(|s| {
            let gray = to_grayscale(&load_resized(manifest, s, cfg.image_size)?);
            Ok((image_to_tensor(&gray), s.class_id))
        })
        .collect();
    let mut out = Vec::with_capacity(loaded.len());
    for t in loaded {
        out.push(t?);
    }
    Ok(Some(out))
}

/// Predicts one split and scores it. Shared by evaluate and the
/// post-training validation report.
fn predict_and_score(
    model: &Model,
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    split: Split,
    cache_path: &Path,
) -> Result<(MetricReport, ConfusionMatrix)> {
    let (labels, predictions) = match cfg.model {
        ModelKind::SmallCnn => {
            let pairs = split_tensors_from_images(manifest, cfg, split)?.ok_or_else(|| {
                PipelineError::data(format!("split {} has no samples", split.name()))
            })?;
            let preds: Vec<Result<usize>> = pairs
                .par_iter()
                .map(|(t, _)| {
                    model
                        .predict(t)
                        .map(|(class, _)| class)
                        .map_err(|e| PipelineError::data(e.to_string()))
                })
                .collect();
            let mut predictions = Vec::with_capacity(preds.len());
            for p in preds {
                predictions.push(p?);
            }
            (pairs.into_iter().map(|(_, l)| l).collect::<Vec<_>>(), predictions)
        }
        ModelKind::Linear | ModelKind::Mlp => {
            let records = extract_features(manifest, cfg, cache_path)?;
            let subset: Vec<&CacheRecord> =
                records.iter().filter(|r| r.split == split).collect();
            if subset.is_empty() {
                return Err(PipelineError::data(format!(
                    "split {} has no samples",
                    split.name()
                )));
            }
            let preds: Vec<Result<usize>> = subset
                .par_iter()
                .map(|r| {
                    model
                        .predict(&feature_tensor(r))
                        .map(|(class, _)| class)
                        .map_err(|e| PipelineError::data(e.to_string()))
                })
                .collect();
            let mut predictions = Vec::with_capacity(preds.len());
            for p in preds {
                predictions.push(p?);
            }
            (subset.iter().map(|r| r.class_id as usize).collect(), predictions)
        }
    };
    let cm = confusion(&labels, &predictions, manifest.num_classes())
        .map_err(|e| PipelineError::data(e.to_string()))?;
    let rep = report(&cm).map_err(|e| PipelineError::data(e.to_string()))?;
    Ok((rep, cm))
}

/// Scores a checkpoint on one split of a manifest.
pub fn evaluate(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    split: Split,
    cache_path: &Path,
) -> Result<(MetricReport, ConfusionMatrix)> {
    if ckpt.class_names != manifest.classes {
        return Err(PipelineError::data(format!(
            "class mismatch: checkpoint has [{}], manifest has [{}]",
            ckpt.class_names.join(", "),
            manifest.classes.join(", ")
        )));
    }
    let model = ckpt.build_model()?;
    predict_and_score(&model, &ckpt.run_config, manifest, split, cache_path)
}

/// The written `report.json` document. Field order is the byte-level
/// contract; identical runs must serialize identically.
#[derive(Debug, Clone, Serialize)]
pub struct EvalDocument {
    /// Averaging convention for the aggregate metrics.
    pub averaging: &'static str,
    pub split: String,
    pub seed: u64,
    pub representation: String,
    pub model: String,
    pub params_fingerprint: String,
    pub dataset_fingerprint: String,
    pub classes: Vec<String>,
    pub metrics: MetricReport,
    /// Rows = true class, columns = predicted class.
    pub confusion: Vec<Vec<u64>>,
}

pub fn eval_document(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    split: Split,
    metrics: MetricReport,
    cm: &ConfusionMatrix,
) -> EvalDocument {
    let k = cm.num_classes();
    let confusion = (0..k)
        .map(|t| (0..k).map(|p| cm.count(t, p)).collect())
        .collect();
    EvalDocument {
        averaging: "macro",
        split: split.name().to_string(),
        seed: ckpt.run_config.seed,
        representation: ckpt.run_config.representation.name().to_string(),
        model: ckpt.run_config.model.name().to_string(),
        params_fingerprint: hex(&ckpt.run_config.params_fingerprint()),
        dataset_fingerprint: manifest.source_fingerprint.clone(),
        classes: manifest.classes.clone(),
        metrics,
        confusion,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    json.push('\n');
    fs::write(path, json).map_err(|e| PipelineError::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-image Grad-CAM outcome within a batch run.
#[derive(Debug, Clone, Serialize)]
pub struct GradcamImageStat {
    pub path: String,
    pub true_class: usize,
    pub predicted_class: usize,
    pub correct: bool,
    /// Fraction of heatmap mass inside the dilated union of lesion
    /// boxes; absent when the sample carries no boxes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lesion_mass: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcamStats {
    pub images: usize,
    pub correct: usize,
    /// Correctly classified images that carry lesion boxes.
    pub with_boxes: usize,
    /// Of those, how many have at least `mass_threshold` of their
    /// heatmap mass inside the dilated boxes.
    pub localized: usize,
    pub localized_fraction: f64,
    pub mass_threshold: f64,
    /// Boxes grow by this fraction of the image side before the mass
    /// test.
    pub dilation: f64,
    pub per_image: Vec<GradcamImageStat>,
}

pub const GRADCAM_MASS_THRESHOLD: f64 = 0.6;
pub const GRADCAM_DILATION: f64 = 0.1;

/// Renders heatmap + overlay images for every sample in the split and
/// computes lesion-localization statistics where boxes are available.
/// Heatmaps target the predicted class.
pub fn gradcam_batch(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    split: Split,
    out_dir: &Path,
    alpha: f64,
) -> Result<GradcamStats> {
    if ckpt.class_names != manifest.classes {
        return Err(PipelineError::data("class mismatch between checkpoint and manifest"));
    }
    let model = ckpt.build_model()?;
    if model.gradcam_target().is_none() {
        return Err(PipelineError::usage(
            "representation mismatch: this checkpoint has no convolutional target layer; \
             grad-cam needs a raw-image small-cnn checkpoint",
        ));
    }
    let size = ckpt.run_config.image_size;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let samples = manifest.split_samples(split);
    if samples.is_empty() {
        return Err(PipelineError::data(format!("split {} has no samples", split.name())));
    }

    let outcomes: Vec<Result<GradcamImageStat>> = samples
        .par_iter()
        .map(|sample| {
            let original = load_image(&manifest.resolve(sample))?;
            let (orig_w, orig_h) = (original.width(), original.height());
            let resized = resize_bilinear(&original, size, size);
            let gray = to_grayscale(&resized);
            let (predicted, _) = model
                .predict(&image_to_tensor(&gray))
                .map_err(|e| PipelineError::data(e.to_string()))?;
            let heat = gradcam_heatmap(&model, &gray, predicted)
                .map_err(|e| PipelineError::data(format!("{}: {e}", sample.path)))?;
            let up = upsample_heatmap(&heat, size, size);
            let overlay = render_overlay(&resized, &up, alpha)
                .map_err(|e| PipelineError::data(e.to_string()))?;

            let stem = sample.path.replace('/', "_");
            let stem = stem.rsplit_once('.').map(|(s, _)| s.to_string()).unwrap_or(stem);
            save_pnm(&out_dir.join(format!("{stem}_overlay.ppm")), &overlay)?;
            let heat_img = ImageBuffer::new(
                size,
                size,
                1,
                up.values().iter().map(|&v| v as f32).collect(),
            )
            .expect("heatmap values are unit-interval");
            save_pnm(&out_dir.join(format!("{stem}_heatmap.pgm")), &heat_img)?;

            let lesion_mass = if sample.lesion_boxes.is_empty() {
                None
            } else {
                Some(mass_in_boxes(
                    &up,
                    &sample.lesion_boxes,
                    (orig_w, orig_h),
                    size,
                    GRADCAM_DILATION,
                ))
            };
            Ok(GradcamImageStat {
                path: sample.path.clone(),
                true_class: sample.class_id,
                predicted_class: predicted,
                correct: predicted == sample.class_id,
                lesion_mass,
            })
        })
        .collect();

    let mut per_image = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        per_image.push(o?);
    }
    let correct = per_image.iter().filter(|s| s.correct).count();
    let eligible: Vec<&GradcamImageStat> = per_image
        .iter()
        .filter(|s| s.correct && s.lesion_mass.is_some())
        .collect();
    let localized = eligible
        .iter()
        .filter(|s| s.lesion_mass.unwrap() >= GRADCAM_MASS_THRESHOLD)
        .count();
    let stats = GradcamStats {
        images: per_image.len(),
        correct,
        with_boxes: eligible.len(),
        localized,
        localized_fraction: if eligible.is_empty() {
            0.0
        } else {
            localized as f64 / eligible.len() as f64
        },
        mass_threshold: GRADCAM_MASS_THRESHOLD,
        dilation: GRADCAM_DILATION,
        per_image,
    };
    write_json(&out_dir.join("stats.json"), &stats)?;
    Ok(stats)
}

/// Fraction of heatmap mass inside the union of lesion boxes, after
/// scaling boxes from original-image coordinates to heatmap resolution
/// and dilating them by `dilation` of the image side. An all-zero
/// heatmap contributes mass 0.
fn mass_in_boxes(
    heatmap: &leafcv_core::gradcam::Heatmap,
    boxes: &[crate::synthdata::LesionBox],
    original: (u32, u32),
    size: u32,
    dilation: f64,
) -> f64 {
    let (ow, oh) = (original.0 as f64, original.1 as f64);
    let scale_x = size as f64 / ow;
    let scale_y = size as f64 / oh;
    let dilate = (dilation * size as f64).round() as i64;
    let mut mask = vec![false; (size * size) as usize];
    for b in boxes {
        let x0 = ((b.x as f64 * scale_x).floor() as i64 - dilate).max(0) as u32;
        let y0 = ((b.y as f64 * scale_y).floor() as i64 - dilate).max(0) as u32;
        let x1 = (((b.x + b.w) as f64 * scale_x).ceil() as i64 + dilate)
            .min(size as i64) as u32;
        let y1 = (((b.y + b.h) as f64 * scale_y).ceil() as i64 + dilate)
            .min(size as i64) as u32;
        for y in y0..y1 {
            for x in x0..x1 {
                mask[(y * size + x) as usize] = true;
            }
        }
    }
    let mut inside = 0.0;
    let mut total = 0.0;
    for (v, &m) in heatmap.values().iter().zip(&mask) {
        total += v;
        if m {
            inside += v;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Representation;
    use crate::dataset::{assign_splits, ingest};
    use crate::synthdata::{generate, LesionBox, SynthConfig};
    use leafcv_core::gradcam::Heatmap as CoreHeatmap;
    use leafcv_core::nn::TrainConfig;

    fn quick_manifest(per_class: usize, seed: u64, dir: &Path) -> DatasetManifest {
        let cfg = SynthConfig { per_class, seed, ..Default::default() };
        generate(&cfg, dir).unwrap();
        assign_splits(&ingest(dir, false).unwrap(), (0.5, 0.25, 0.25), seed).unwrap()
    }

    fn head_config(representation: Representation, epochs: usize, seed: u64) -> RunConfig {
        RunConfig {
            representation,
            model: ModelKind::Linear,
            train: TrainConfig { epochs, seed, ..Default::default() },
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn extraction_cache_is_reused_and_invalidated() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = quick_manifest(4, 3, dir.path());
        let cfg = head_config(Representation::Hog, 1, 3);
        let cache = dir.path().join("features.lfcv");

        let first = extract_features(&manifest, &cfg, &cache).unwrap();
        let bytes_before = fs::read(&cache).unwrap();
        let second = extract_features(&manifest, &cfg, &cache).unwrap();
        assert_eq!(first, second);
        assert_eq!(bytes_before, fs::read(&cache).unwrap());

        // Perturbing one parameter invalidates the cache and regenerates.
        let mut other = cfg.clone();
        other.hog.orientations = 12;
        let third = extract_features(&manifest, &other, &cache).unwrap();
        assert_ne!(first[0].values.len(), third[0].values.len());
        assert_ne!(bytes_before, fs::read(&cache).unwrap());
    }

    #[test]
    fn zero_epoch_training_keeps_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = quick_manifest(4, 5, dir.path());
        let cfg = head_config(Representation::Raw, 0, 5);
        let cache = dir.path().join("f.lfcv");
        let (ckpt, _) = run_training(&cfg, &manifest, &cache).unwrap();
        let fresh = Model::build(&ckpt.model_spec).unwrap();
        assert_eq!(ckpt.params, fresh.flat_params());
        assert!(ckpt.history.is_empty());
    }

    #[test]
    fn training_and_evaluation_compose() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = quick_manifest(6, 7, dir.path());
        let cfg = head_config(Representation::Hog, 12, 7);
        let cache = dir.path().join("f.lfcv");
        let (ckpt, val_report) = run_training(&cfg, &manifest, &cache).unwrap();
        assert_eq!(ckpt.history.len(), 12);
        assert!(val_report.is_some());

        let (rep, cm) = evaluate(&ckpt, &manifest, Split::Test, &cache).unwrap();
        assert_eq!(cm.total() as usize, manifest.split_samples(Split::Test).len());
        assert!((0.0..=1.0).contains(&rep.accuracy));
        // The report must equal metrics on the returned confusion.
        assert_eq!(rep, report(&cm).unwrap());
    }

    #[test]
    fn evaluation_rejects_mismatched_classes() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = quick_manifest(4, 9, dir.path());
        let cfg = head_config(Representation::Raw, 1, 9);
        let cache = dir.path().join("f.lfcv");
        let (mut ckpt, _) = run_training(&cfg, &manifest, &cache).unwrap();
        ckpt.class_names[0] = "something_else".into();
        assert!(matches!(
            evaluate(&ckpt, &manifest, Split::Test, &cache),
            Err(PipelineError::Data(_))
        ));
    }

    #[test]
    fn gradcam_batch_rejects_feature_head_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = quick_manifest(4, 11, dir.path());
        let cfg = head_config(Representation::Hog, 1, 11);
        let cache = dir.path().join("f.lfcv");
        let (ckpt, _) = run_training(&cfg, &manifest, &cache).unwrap();
        let out = dir.path().join("cam");
        match gradcam_batch(&ckpt, &manifest, Split::Test, &out, 0.5) {
            Err(PipelineError::Usage(msg)) => assert!(msg.contains("representation mismatch")),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn gradcam_batch_writes_overlays_and_stats() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = quick_manifest(4, 13, dir.path());
        let cfg = RunConfig {
            train: TrainConfig { epochs: 1, batch_size: 8, ..Default::default() },
            seed: 13,
            ..Default::default()
        };
        let cache = dir.path().join("f.lfcv");
        let (ckpt, _) = run_training(&cfg, &manifest, &cache).unwrap();
        let out = dir.path().join("cam");
        let stats = gradcam_batch(&ckpt, &manifest, Split::Test, &out, 0.5).unwrap();
        assert_eq!(stats.images, manifest.split_samples(Split::Test).len());
        assert_eq!(stats.per_image.len(), stats.images);
        assert!(out.join("stats.json").exists());
        for s in &stats.per_image {
            let stem = s.path.replace('/', "_").replace(".ppm", "");
            assert!(out.join(format!("{stem}_overlay.ppm")).exists(), "{stem}");
            assert!(out.join(format!("{stem}_heatmap.pgm")).exists(), "{stem}");
            // Healthy images carry no boxes, diseased ones do.
            if manifest.classes[s.true_class] == "healthy" {
                assert!(s.lesion_mass.is_none());
            } else {
                assert!(s.lesion_mass.is_some());
            }
        }
    }

    #[test]
    fn box_mass_uses_dilated_union() {
        // Uniform heatmap: mass fraction = dilated box area / total.
        let size = 10u32;
        let values = vec![1.0; 100];
        let h = CoreHeatmap::from_values(size, size, values);
        let boxes = [LesionBox { x: 4, y: 4, w: 2, h: 2 }];
        // dilation 0.1 * 10 = 1 pixel each side -> 4x4 box = 16 cells.
        let mass = mass_in_boxes(&h, &boxes, (10, 10), size, 0.1);
        assert!((mass - 0.16).abs() <= 1e-12, "{mass}");
        // Zero heatmap -> zero mass.
        let z = CoreHeatmap::from_values(size, size, vec![0.0; 100]);
        assert_eq!(mass_in_boxes(&z, &boxes, (10, 10), size, 0.1), 0.0);
    }
}
