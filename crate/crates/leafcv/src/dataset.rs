//! Dataset ingestion and split assignment. A dataset is a directory of
//! class subdirectories; ingestion canonicalizes classes in
//! lexicographic order into dense ids, verifies every image decodes,
//! and fingerprints the source bytes. Splits are stratified per class
//! with largest-remainder rounding and a seeded shuffle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use leafcv_core::rng::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::load_image;
use crate::error::{PipelineError, Result};
use crate::synthdata::{LesionBox, SynthManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Path relative to the dataset root, with forward slashes.
    pub path: String,
    pub class_id: usize,
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lesion_boxes: Vec<LesionBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Dataset root directory; sample paths are relative to it.
    pub root: String,
    /// Class names in lexicographic order; index = class id.
    pub classes: Vec<String>,
    pub samples: Vec<SampleRecord>,
    /// SHA-256 over every (relative path, file bytes) pair in order.
    pub source_fingerprint: String,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Absolute path of a sample.
    pub fn resolve(&self, sample: &SampleRecord) -> PathBuf {
        Path::new(&self.root).join(&sample.path)
    }

    /// Samples carrying the given split label, in manifest order.
    pub fn split_samples(&self, split: Split) -> Vec<&SampleRecord> {
        self.samples.iter().filter(|s| s.split == Some(split)).collect()
    }

    /// Per-class sample counts over the whole manifest.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.class_id] += 1;
        }
        counts
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .expect("manifest serialization cannot fail");
        fs::write(path, json).map_err(|e| PipelineError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| {
            PipelineError::data(format!("{} is not a dataset manifest: {e}", path.display()))
        })
    }
}

/// Scans a directory-per-class tree, decoding every image. Classes are
/// the immediate subdirectories in lexicographic order; files inside
/// each class are also taken in lexicographic order. A class directory
/// without any image file is an error. Undecodable files abort the
/// ingest (all of them listed) unless `skip_bad` is set, in which case
/// they are dropped. If the root carries a generator `manifest.json`,
/// its lesion boxes are attached to the matching samples.
pub fn ingest(data_dir: &Path, skip_bad: bool) -> Result<DatasetManifest> {
    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    let entries = fs::read_dir(data_dir).map_err(|e| PipelineError::io(data_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| PipelineError::io(data_dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            class_dirs.push((name, path));
        }
    }
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(PipelineError::data(format!(
            "{} contains no class directories",
            data_dir.display()
        )));
    }

    let lesions = load_lesion_map(data_dir);

    let mut candidates: Vec<(String, usize)> = Vec::new(); // (rel path, class_id)
    for (class_id, (name, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<String> = Vec::new();
        let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| PipelineError::io(dir, e))?;
            if entry.path().is_file() {
                files.push(format!("{name}/{}", entry.file_name().to_string_lossy()));
            }
        }
        if files.is_empty() {
            return Err(PipelineError::data(format!(
                "empty class directory: {}",
                dir.display()
            )));
        }
        files.sort();
        candidates.extend(files.into_iter().map(|f| (f, class_id)));
    }

    // Decode in parallel; gather outcomes by index so parallelism never
    // reorders anything.
    let outcomes: Vec<std::result::Result<(), String>> = candidates
        .par_iter()
        .map(|(rel, _)| match load_image(&data_dir.join(rel)) {
            Ok(_) => Ok(()),
            Err(e) => Err(format!("{rel}: {e}")),
        })
        .collect();

    let mut bad = Vec::new();
    let mut samples = Vec::new();
    for ((rel, class_id), outcome) in candidates.into_iter().zip(outcomes) {
        match outcome {
            Ok(()) => samples.push(SampleRecord {
                lesion_boxes: lesions.get(&rel).cloned().unwrap_or_default(),
                path: rel,
                class_id,
                split: None,
            }),
            Err(msg) => bad.push(msg),
        }
    }
    if !bad.is_empty() && !skip_bad {
        return Err(PipelineError::data(format!(
            "{} undecodable image(s):\n  {}",
            bad.len(),
            bad.join("\n  ")
        )));
    }
    if samples.is_empty() {
        return Err(PipelineError::data("no decodable images found".to_string()));
    }

    let mut hasher = Sha256::new();
    for s in &samples {
        hasher.update(s.path.as_bytes());
        hasher.update([0u8]);
        let bytes = fs::read(data_dir.join(&s.path))
            .map_err(|e| PipelineError::io(data_dir.join(&s.path), e))?;
        hasher.update(&bytes);
    }
    let source_fingerprint = hex(&hasher.finalize());

    Ok(DatasetManifest {
        root: data_dir.to_string_lossy().into_owned(),
        classes: class_dirs.into_iter().map(|(n, _)| n).collect(),
        samples,
        source_fingerprint,
    })
}

fn load_lesion_map(data_dir: &Path) -> BTreeMap<String, Vec<LesionBox>> {
    let mut map = BTreeMap::new();
    let path = data_dir.join("manifest.json");
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(manifest) = serde_json::from_slice::<SynthManifest>(&bytes) {
            for r in manifest.records {
                if !r.lesion_boxes.is_empty() {
                    map.insert(r.path, r.lesion_boxes);
                }
            }
        }
    }
    map
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Assigns stratified train/val/test labels. Per class, quotas follow
/// largest-remainder rounding of `fractions` (ties broken in
/// train, val, test order) over a seeded shuffle; every class must end
/// up with at least one test sample.
/// Checks that each fraction lies in `[0, 1]` and the three sum to 1.
pub fn validate_fractions(fractions: (f64, f64, f64)) -> Result<()> {
    let (ft, fv, fe) = fractions;
    for (name, f) in [("train", ft), ("val", fv), ("test", fe)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(PipelineError::usage(format!(
                "{name} fraction {f} not in [0, 1]"
            )));
        }
    }
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(PipelineError::usage(format!(
            "split fractions must sum to 1, got {}",
            ft + fv + fe
        )));
    }
    Ok(())
}

pub fn assign_splits(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    validate_fractions(fractions)?;
    let (ft, fv, fe) = fractions;

    let mut out = manifest.clone();
    let base = SplitMix64::new(seed);
    for class_id in 0..manifest.num_classes() {
        let mut indices: Vec<usize> = manifest
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class_id == class_id)
            .map(|(i, _)| i)
            .collect();
        let n = indices.len();
        if n == 0 {
            // Unreachable for ingested manifests (empty classes abort
            // earlier), but hand-built manifests can get here.
            return Err(PipelineError::data(format!(
                "class {class_id} ({}) has no samples",
                manifest.classes[class_id]
            )));
        }
        let quotas = largest_remainder(n, [ft, fv, fe]);
        if quotas[2] == 0 {
            return Err(PipelineError::data(format!(
                "class {} too small for the requested split: no test sample",
                manifest.classes[class_id]
            )));
        }
        let mut rng = base.split_stream(class_id as u64);
        rng.shuffle(&mut indices);
        for (pos, &sample_idx) in indices.iter().enumerate() {
            let split = if pos < quotas[0] {
                Split::Train
            } else if pos < quotas[0] + quotas[1] {
                Split::Val
            } else {
                Split::Test
            };
            out.samples[sample_idx].split = Some(split);
        }
    }
    Ok(out)
}

/// Integer quotas summing to `n` that round `fractions * n` by largest
/// remainder; ties go to the earlier entry.
fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // Sort by descending remainder; stable sort keeps index order on ties.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for i in 0..n.saturating_sub(assigned) {
        quotas[order[i % 3]] += 1;
    }
    [quotas[0], quotas[1], quotas[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, SynthConfig};

    fn synth_dir(per_class: usize, seed: u64) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { per_class, seed, ..Default::default() };
        generate(&cfg, dir.path()).unwrap();
        dir
    }

    #[test]
    fn ingest_of_synth_output_finds_all_classes_and_samples() {
        let dir = synth_dir(5, 3);
        let m = ingest(dir.path(), false).unwrap();
        assert_eq!(m.classes, vec!["brown_spot", "healthy", "leaf_blast", "neck_blast"]);
        assert_eq!(m.samples.len(), 20);
        assert_eq!(m.class_counts(), vec![5, 5, 5, 5]);
        // Synth lesion boxes are carried over for the diseased classes.
        assert!(m
            .samples
            .iter()
            .filter(|s| m.classes[s.class_id] != "healthy")
            .all(|s| !s.lesion_boxes.is_empty()));
        assert!(m
            .samples
            .iter()
            .filter(|s| m.classes[s.class_id] == "healthy")
            .all(|s| s.lesion_boxes.is_empty()));
    }

    #[test]
    fn reingest_of_unchanged_directory_is_identical() {
        let dir = synth_dir(2, 9);
        let a = ingest(dir.path(), false).unwrap();
        let b = ingest(dir.path(), false).unwrap();
        assert_eq!(a, b);
        let (pa, pb) = (
            serde_json::to_string_pretty(&a).unwrap(),
            serde_json::to_string_pretty(&b).unwrap(),
        );
        assert_eq!(pa, pb);
    }

    #[test]
    fn empty_class_directory_is_rejected() {
        let dir = synth_dir(1, 0);
        fs::create_dir(dir.path().join("zz_empty")).unwrap();
        match ingest(dir.path(), false) {
            Err(PipelineError::Data(msg)) => assert!(msg.contains("empty class directory")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn undecodable_files_abort_unless_skipped() {
        let dir = synth_dir(2, 1);
        fs::write(dir.path().join("healthy/broken.ppm"), b"P6 nonsense").unwrap();
        match ingest(dir.path(), false) {
            Err(PipelineError::Data(msg)) => {
                assert!(msg.contains("broken.ppm"), "{msg}");
            }
            other => panic!("expected data error, got {other:?}"),
        }
        let skipped = ingest(dir.path(), true).unwrap();
        assert_eq!(skipped.samples.len(), 8);
        assert!(skipped.samples.iter().all(|s| !s.path.contains("broken")));
    }

    #[test]
    fn fingerprint_tracks_content_changes() {
        let dir = synth_dir(1, 5);
        let before = ingest(dir.path(), false).unwrap();
        // Overwrite one image with another valid image.
        let img = leafcv_core::imaging::ImageBuffer::filled(64, 64, 3, 0.25).unwrap();
        crate::codec::save_pnm(&dir.path().join("healthy/0.ppm"), &img).unwrap();
        let after = ingest(dir.path(), false).unwrap();
        assert_ne!(before.source_fingerprint, after.source_fingerprint);
        assert_eq!(before.samples.len(), after.samples.len());
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = synth_dir(2, 2);
        let m = ingest(dir.path(), false).unwrap();
        let path = dir.path().join("ingested.json");
        m.save(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), m);
    }

    #[test]
    fn ten_per_class_splits_seven_two_one() {
        // 70/15/15 of 10: floors (7,1,1), remainders (0,.5,.5); the tie
        // goes to val (earlier in train,val,test order).
        assert_eq!(largest_remainder(10, [0.70, 0.15, 0.15]), [7, 2, 1]);
        assert_eq!(largest_remainder(20, [0.70, 0.15, 0.15]), [14, 3, 3]);
        assert_eq!(largest_remainder(1, [0.70, 0.15, 0.15]), [1, 0, 0]);

        let dir = synth_dir(10, 4);
        let m = assign_splits(&ingest(dir.path(), false).unwrap(), (0.7, 0.15, 0.15), 0).unwrap();
        for class_id in 0..4 {
            let per_split: Vec<usize> = Split::ALL
                .iter()
                .map(|&sp| {
                    m.split_samples(sp).iter().filter(|s| s.class_id == class_id).count()
                })
                .collect();
            assert_eq!(per_split, vec![7, 2, 1], "class {class_id}");
        }
        assert!(m.samples.iter().all(|s| s.split.is_some()));
    }

    #[test]
    fn all_train_split_fails_for_missing_test_samples() {
        let dir = synth_dir(3, 8);
        let m = ingest(dir.path(), false).unwrap();
        match assign_splits(&m, (1.0, 0.0, 0.0), 0) {
            Err(PipelineError::Data(msg)) => assert!(msg.contains("too small"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn bad_fractions_are_usage_errors() {
        let dir = synth_dir(2, 8);
        let m = ingest(dir.path(), false).unwrap();
        assert!(matches!(
            assign_splits(&m, (0.5, 0.2, 0.2), 0),
            Err(PipelineError::Usage(_))
        ));
        assert!(matches!(
            assign_splits(&m, (-0.2, 0.6, 0.6), 0),
            Err(PipelineError::Usage(_))
        ));
    }

    #[test]
    fn same_seed_gives_identical_assignment_different_seed_differs() {
        let dir = synth_dir(12, 6);
        let m = ingest(dir.path(), false).unwrap();
        let a = assign_splits(&m, (0.7, 0.15, 0.15), 42).unwrap();
        let b = assign_splits(&m, (0.7, 0.15, 0.15), 42).unwrap();
        assert_eq!(a, b);
        let c = assign_splits(&m, (0.7, 0.15, 0.15), 43).unwrap();
        assert_ne!(a, c, "different seed should shuffle differently");
    }
}
