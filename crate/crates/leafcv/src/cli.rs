//! Command-line surface: `leafcv synth|ingest|extract|train|eval|gradcam|chart`.
//!
//! Every subcommand that consumes a run configuration accepts
//! `--config <file>` (JSON) plus individual flag overrides; flags win.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
//! divergence.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use leafcv_core::metrics::MetricReport;
use serde::Deserialize;

use crate::chart::emit_chart;
use crate::checkpoint::Checkpoint;
use crate::config::{ModelKind, Representation, RunConfig};
use crate::dataset::{assign_splits, ingest, DatasetManifest, Split};
use crate::error::{PipelineError, Result};
use crate::runner::{
    eval_document, evaluate, extract_features, gradcam_batch, run_training, write_json,
};
use crate::synthdata::{generate, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "leafcv",
    version,
    about = "Leaf-disease imaging pipeline: synthesis, descriptors, training, Grad-CAM"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic leaf-disease dataset.
    Synth(SynthArgs),
    /// Scan a class-per-directory image tree into a split manifest.
    Ingest(IngestArgs),
    /// Extract descriptors for every manifest sample into a cache file.
    Extract(ExtractArgs),
    /// Train a model on the manifest's train split and save a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on one split and write a report.json.
    Eval(EvalArgs),
    /// Render Grad-CAM heatmaps and overlays with localization stats.
    Gradcam(GradcamArgs),
    /// Emit a grouped SVG bar chart from report.json files.
    Chart(ChartArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory (one subdirectory per class).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    image_size: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale class counts by the source dataset's imbalance.
    #[arg(long)]
    imbalanced: bool,
    /// Skip recording lesion bounding boxes in the manifest.
    #[arg(long)]
    no_lesion_boxes: bool,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Root directory containing one subdirectory per class.
    #[arg(long)]
    data: PathBuf,
    /// Where to write the dataset manifest (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Train,val,test fractions; must sum to 1.
    #[arg(long, default_value = "0.7,0.15,0.15", value_parser = parse_fractions)]
    split: (f64, f64, f64),
    /// Seed for the stratified split shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip undecodable images instead of aborting.
    #[arg(long)]
    skip_bad: bool,
}

/// Run-configuration source shared by extract and train: an optional
/// JSON file plus flag overrides (flags win).
#[derive(Debug, Args, Clone)]
struct ConfigArgs {
    /// JSON run-config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    representation: Option<Representation>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    image_size: Option<u32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Master seed: sets the split, initialization, and augmentation
    /// seeds together.
    #[arg(long)]
    seed: Option<u64>,
    /// Augment images once before descriptor extraction.
    #[arg(long)]
    augment_features: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        self.resolve_inner(false)
    }

    /// Extraction never builds the model head, so a leftover small-cnn
    /// default is coerced to a feature-compatible head instead of
    /// tripping the pairing validation.
    fn resolve_for_extract(&self) -> Result<RunConfig> {
        self.resolve_inner(true)
    }

    fn resolve_inner(&self, for_extract: bool) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(r) = self.representation {
            cfg.representation = r;
        }
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(s) = self.image_size {
            cfg.image_size = s;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = lr;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.train.seed = seed;
            cfg.augment.seed = seed;
        }
        if self.augment_features {
            cfg.augment_features = true;
        }
        if for_extract
            && cfg.representation != Representation::Raw
            && cfg.model == ModelKind::SmallCnn
        {
            cfg.model = ModelKind::Linear;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the feature cache (.lfcv).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the checkpoint (.lfck).
    #[arg(long)]
    out: PathBuf,
    /// Feature cache path for descriptor runs (default: alongside the
    /// checkpoint).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Also write the validation report here (JSON).
    #[arg(long)]
    val_report: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write report.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Feature cache path for descriptor runs (default: alongside the
    /// checkpoint).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for heatmaps, overlays, and stats.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Overlay blend weight in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct ChartArgs {
    /// Where to write the SVG.
    #[arg(long)]
    out: PathBuf,
    /// Also draw macro-F1 bars.
    #[arg(long)]
    f1: bool,
    /// Report entries as LABEL=REPORT_PATH.
    #[arg(required = true, value_name = "LABEL=REPORT")]
    reports: Vec<String>,
}

fn parse_fractions(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated fractions, got {s:?}"));
    }
    let mut v = [0.0f64; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad fraction {p:?}: {e}"))?;
    }
    Ok((v[0], v[1], v[2]))
}

fn default_cache(explicit: &Option<PathBuf>, anchor: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        anchor
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("features.lfcv")
    })
}

/// Minimal view of a report.json for charting.
#[derive(Deserialize)]
struct ReportFile {
    metrics: MetricReport,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = SynthConfig {
                per_class: args.per_class,
                image_size: args.image_size,
                seed: args.seed,
                lesion_logging: !args.no_lesion_boxes,
                imbalanced: args.imbalanced,
            };
            let manifest = generate(&cfg, &args.out)?;
            println!(
                "synth: wrote {} images to {}",
                manifest.records.len(),
                args.out.display()
            );
        }
        Command::Ingest(args) => {
            // Cheap flag validation before scanning the tree.
            crate::dataset::validate_fractions(args.split)?;
            let manifest = ingest(&args.data, args.skip_bad)?;
            let manifest = assign_splits(&manifest, args.split, args.seed)?;
            manifest.save(&args.out)?;
            let counts: Vec<String> = Split::ALL
                .iter()
                .map(|&s| format!("{} {}", manifest.split_samples(s).len(), s.name()))
                .collect();
            println!(
                "ingest: {} samples, {} classes ({})",
                manifest.samples.len(),
                manifest.num_classes(),
                counts.join(", ")
            );
        }
        Command::Extract(args) => {
            let cfg = args.config.resolve_for_extract()?;
            let manifest = DatasetManifest::load(&args.manifest)?;
            let records = extract_features(&manifest, &cfg, &args.out)?;
            println!(
                "extract: {} descriptors of dim {} -> {}",
                records.len(),
                cfg.feature_dim()?,
                args.out.display()
            );
        }
        Command::Train(args) => {
            let cfg = args.config.resolve()?;
            let manifest = DatasetManifest::load(&args.manifest)?;
            let cache = default_cache(&args.cache, &args.out);
            let (ckpt, val_report) = run_training(&cfg, &manifest, &cache)?;
            ckpt.save(&args.out)?;
            if let Some(last) = ckpt.history.last() {
                println!(
                    "train: {} epochs, final loss {:.6}, train accuracy {:.4}",
                    ckpt.history.len(),
                    last.train_loss,
                    last.train_accuracy
                );
            } else {
                println!("train: 0 epochs (checkpoint holds the initialization)");
            }
            if let Some(rep) = val_report {
                println!("train: val accuracy {:.4}, macro-F1 {:.4}", rep.accuracy, rep.macro_f1);
                if let Some(path) = &args.val_report {
                    write_json(path, &rep)?;
                }
            }
            println!("train: checkpoint -> {}", args.out.display());
        }
        Command::Eval(args) => {
            let ckpt = Checkpoint::load(&args.checkpoint)?;
            let manifest = DatasetManifest::load(&args.manifest)?;
            let cache = default_cache(&args.cache, &args.checkpoint);
            let (metrics, cm) = evaluate(&ckpt, &manifest, args.split, &cache)?;
            let doc = eval_document(&ckpt, &manifest, args.split, metrics, &cm);
            write_json(&args.out, &doc)?;
            println!(
                "eval: split {} accuracy {:.4}, macro-F1 {:.4} -> {}",
                args.split.name(),
                doc.metrics.accuracy,
                doc.metrics.macro_f1,
                args.out.display()
            );
        }
        Command::Gradcam(args) => {
            if !(0.0..=1.0).contains(&args.alpha) {
                return Err(PipelineError::usage(format!(
                    "--alpha {} not in [0, 1]",
                    args.alpha
                )));
            }
            let ckpt = Checkpoint::load(&args.checkpoint)?;
            let manifest = DatasetManifest::load(&args.manifest)?;
            let stats = gradcam_batch(&ckpt, &manifest, args.split, &args.out, args.alpha)?;
            println!(
                "gradcam: {} images ({} correct); localized {}/{} -> {}",
                stats.images,
                stats.correct,
                stats.localized,
                stats.with_boxes,
                args.out.display()
            );
        }
        Command::Chart(args) => {
            let mut reports = Vec::with_capacity(args.reports.len());
            for entry in &args.reports {
                let (label, path) = entry.split_once('=').ok_or_else(|| {
                    PipelineError::usage(format!(
                        "chart entry {entry:?} must look like LABEL=REPORT_PATH"
                    ))
                })?;
                let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
                let parsed: ReportFile = serde_json::from_slice(&bytes).map_err(|e| {
                    PipelineError::data(format!("{path}: not a report file: {e}"))
                })?;
                reports.push((label.to_string(), parsed.metrics));
            }
            emit_chart(&reports, args.f1, &args.out)?;
            println!("chart: {} runs -> {}", reports.len(), args.out.display());
        }
    }
    Ok(())
}

/// Full process entry: parse, dispatch, map errors to exit codes.
pub fn main_entry() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; everything else is
            // a usage error (exit 1).
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            std::process::ExitCode::from(e.exit_code() as u8)
        }
    }
}
