//! Run configuration: which representation feeds which model head,
//! descriptor parameters, split fractions, and the seeds. Loadable from
//! a JSON file with per-field defaults, so partial configs are fine.

use std::fs;
use std::path::Path;

use leafcv_core::augment::AugmentConfig;
use leafcv_core::features::{hog_feature_len, FeatureKind, HogParams, LbpParams};
use leafcv_core::nn::{ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Grayscale pixels, fed as an image (small-cnn) or flattened.
    Raw,
    Hog,
    Lbp,
}

impl Representation {
    pub fn feature_kind(self) -> FeatureKind {
        match self {
            Representation::Raw => FeatureKind::Raw,
            Representation::Hog => FeatureKind::Hog,
            Representation::Lbp => FeatureKind::Lbp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Hog => "hog",
            Representation::Lbp => "lbp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SmallCnn,
    Linear,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SmallCnn => "small-cnn",
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub representation: Representation,
    pub model: ModelKind,
    /// Images are resized to `image_size` x `image_size` before
    /// descriptors or training.
    pub image_size: u32,
    pub hog: HogParams,
    pub lbp: LbpParams,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    /// Augment images before descriptor extraction (off by default;
    /// augmentation normally applies only to raw-image training).
    pub augment_features: bool,
    /// Train/val/test fractions.
    pub split: (f64, f64, f64),
    /// Master seed: split assignment and parameter initialization.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            representation: Representation::Raw,
            model: ModelKind::SmallCnn,
            image_size: 64,
            hog: HogParams::default(),
            lbp: LbpParams::default(),
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            augment_features: false,
            split: (0.70, 0.15, 0.15),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        let cfg: RunConfig = serde_json::from_slice(&bytes).map_err(|e| {
            PipelineError::usage(format!("{} is not a run config: {e}", path.display()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.representation, self.model) {
            (Representation::Raw, _) => {}
            (_, ModelKind::Linear | ModelKind::Mlp) => {}
            (rep, ModelKind::SmallCnn) => {
                return Err(PipelineError::usage(format!(
                    "small-cnn consumes raw images; representation {} needs a linear or mlp head",
                    rep.name()
                )));
            }
        }
        self.train
            .validate()
            .map_err(|e| PipelineError::usage(format!("train config: {e}")))?;
        self.augment
            .validate()
            .map_err(|e| PipelineError::usage(format!("augment config: {e}")))?;
        if self.image_size < 16 {
            return Err(PipelineError::usage(format!(
                "image_size {} is too small to classify",
                self.image_size
            )));
        }
        Ok(())
    }

    /// Length of one feature vector under this config.
    pub fn feature_dim(&self) -> Result<usize> {
        match self.representation {
            Representation::Raw | Representation::Lbp => {
                Ok(self.image_size as usize * self.image_size as usize)
            }
            Representation::Hog => {
                hog_feature_len(&self.hog, self.image_size, self.image_size)
                    .map_err(|e| PipelineError::usage(format!("hog params: {e}")))
            }
        }
    }

    /// Descriptor parameter fingerprint for cache validation.
    pub fn params_fingerprint(&self) -> [u8; 32] {
        match self.representation {
            Representation::Raw => leafcv_core::features::raw_fingerprint(),
            Representation::Hog => self.hog.fingerprint(),
            Representation::Lbp => self.lbp.fingerprint(),
        }
    }

    /// Model spec implied by this config.
    pub fn model_spec(&self, num_classes: usize) -> Result<ModelSpec> {
        let spec = match self.model {
            ModelKind::SmallCnn => ModelSpec::small_cnn(
                [1, self.image_size as usize, self.image_size as usize],
                num_classes,
                self.seed,
            ),
            ModelKind::Linear => ModelSpec::linear(self.feature_dim()?, num_classes, self.seed),
            ModelKind::Mlp => ModelSpec::mlp(self.feature_dim()?, num_classes, self.seed),
        };
        Ok(spec)
    }
}
