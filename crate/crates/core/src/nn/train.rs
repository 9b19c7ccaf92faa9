//! Seeded, single-threaded training loop — the determinism contract for
//! the whole pipeline.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::model::{xent_loss_and_dlogits, Model, NnError};
use super::optim::{Optimizer, TrainConfig};
use super::tensor::Tensor;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    InvalidConfig(String),
    /// A class id in `0..num_classes` has no training sample.
    EmptyClass { class_id: usize },
    LabelOutOfRange { index: usize, label: usize },
    /// Loss became non-finite; parameters are left at the last finite
    /// state.
    DivergedLoss { epoch: usize, loss: f64 },
    Model(NnError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::InvalidConfig(m) => write!(f, "invalid train config: {m}"),
            TrainError::EmptyClass { class_id } => {
                write!(f, "class {class_id} has no training samples")
            }
            TrainError::LabelOutOfRange { index, label } => {
                write!(f, "sample {index} has label {label} outside the class range")
            }
            TrainError::DivergedLoss { epoch, loss } => {
                write!(f, "loss diverged to {loss} in epoch {epoch}")
            }
            TrainError::Model(e) => write!(f, "model error: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Model(e)
    }
}

/// One epoch of history. Loss and accuracy are measured on the training
/// samples as presented (after any augmentation the provider applies).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Train `model` in place. `labels[i]` is the class of sample `i`;
/// `provider(i, epoch)` materializes that sample for the given epoch
/// (augmenting providers key their RNG on `(epoch, i)` to stay
/// deterministic). `val` samples, when given, are evaluated after each
/// epoch without augmentation.
///
/// Epoch shuffling derives one RNG stream per epoch from `cfg.seed`, so
/// identical inputs produce bit-identical history and parameters.
pub fn train<F>(
    model: &mut Model,
    labels: &[usize],
    mut provider: F,
    cfg: &TrainConfig,
    val: Option<&[(Tensor, usize)]>,
) -> Result<Vec<EpochStats>, TrainError>
where
    F: FnMut(usize, usize) -> Tensor,
{
    cfg.validate().map_err(TrainError::InvalidConfig)?;
    let num_classes = model.num_classes();
    let mut class_seen = alloc::vec![false; num_classes];
    for (index, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(TrainError::LabelOutOfRange { index, label });
        }
        class_seen[label] = true;
    }
    if let Some(class_id) = class_seen.iter().position(|seen| !seen) {
        return Err(TrainError::EmptyClass { class_id });
    }

    let n = labels.len();
    let base_rng = SplitMix64::new(cfg.seed);
    let mut params = model.flat_params();
    let mut optimizer = Optimizer::new(cfg, params.len());
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = base_rng.split_stream(epoch as u64);
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_loss = 0.0;
            let mut grads = alloc::vec![0.0; params.len()];
            for &i in batch {
                let x = provider(i, epoch);
                let (logits, cache) = model.forward(&x)?;
                if argmax(&logits) == labels[i] {
                    correct += 1;
                }
                let (loss, dlogits) = xent_loss_and_dlogits(&logits, labels[i]);
                if !loss.is_finite() {
                    return Err(TrainError::DivergedLoss { epoch, loss });
                }
                batch_loss += loss;
                let back = model.backward(&cache, &dlogits);
                for (acc, g) in grads.iter_mut().zip(&back.param_grads) {
                    *acc += g;
                }
            }
            let scale = batch.len() as f64;
            let mean_loss = batch_loss / scale;
            if !mean_loss.is_finite() {
                return Err(TrainError::DivergedLoss { epoch, loss: mean_loss });
            }
            for g in grads.iter_mut() {
                *g /= scale;
            }
            optimizer.step(&mut params, &grads);
            model.set_flat_params(&params);
            epoch_loss += batch_loss;
        }

        let val_accuracy = match val {
            Some(samples) if !samples.is_empty() => {
                let mut ok = 0usize;
                for (x, label) in samples {
                    let (pred, _) = model.predict(x)?;
                    if pred == *label {
                        ok += 1;
                    }
                }
                Some(ok as f64 / samples.len() as f64)
            }
            _ => None,
        };
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / n as f64,
            train_accuracy: correct as f64 / n as f64,
            val_accuracy,
        });
    }
    Ok(history)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
