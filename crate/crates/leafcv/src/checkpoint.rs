//! Model checkpoints. Little-endian layout:
//!
//! ```text
//! magic "LFCK" | version u32
//! | header_len u64 | header JSON (model spec, class names,
//!                    train config, training history)
//! | param_count u64 | param_count f64 parameter values
//! ```
//!
//! Parameters are stored as raw f64 bits in the model's flat layout, so
//! a load/save round trip reproduces predictions bit-exactly.

use std::fs;
use std::path::Path;

use leafcv_core::nn::{EpochStats, Model, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{PipelineError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    model_spec: ModelSpec,
    class_names: Vec<String>,
    run_config: RunConfig,
    history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_spec: ModelSpec,
    pub class_names: Vec<String>,
    /// The full run configuration (representation, descriptor
    /// parameters, training hyperparameters) behind these weights.
    pub run_config: RunConfig,
    pub history: Vec<EpochStats>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    /// Captures a trained model alongside everything needed to rerun it.
    pub fn from_model(
        model: &Model,
        class_names: Vec<String>,
        run_config: RunConfig,
        history: Vec<EpochStats>,
    ) -> Checkpoint {
        Checkpoint {
            model_spec: model.spec().clone(),
            class_names,
            run_config,
            history,
            params: model.flat_params(),
        }
    }

    /// Rebuilds the model with the stored parameters.
    pub fn build_model(&self) -> Result<Model> {
        let mut model = Model::build(&self.model_spec)
            .map_err(|e| PipelineError::data(format!("checkpoint model spec: {e}")))?;
        if self.params.len() != model.param_count() {
            return Err(PipelineError::data(format!(
                "checkpoint has {} parameters, spec needs {}",
                self.params.len(),
                model.param_count()
            )));
        }
        model.set_flat_params(&self.params);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            model_spec: self.model_spec.clone(),
            class_names: self.class_names.clone(),
            run_config: self.run_config.clone(),
            history: self.history.clone(),
        };
        let header_json =
            serde_json::to_vec(&header).expect("checkpoint header serialization cannot fail");
        let mut buf =
            Vec::with_capacity(24 + header_json.len() + 8 * self.params.len());
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header_json);
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| PipelineError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        let corrupt = |what: &str| {
            PipelineError::data(format!("corrupt checkpoint {}: {what}", path.display()))
        };
        if bytes.len() < 16 {
            return Err(corrupt("truncated header"));
        }
        if bytes[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize.checked_add(header_len).ok_or_else(|| corrupt("overflow"))?;
        let header_json =
            bytes.get(16..header_end).ok_or_else(|| corrupt("truncated header json"))?;
        let header: CheckpointHeader = serde_json::from_slice(header_json)
            .map_err(|e| corrupt(&format!("bad header json: {e}")))?;
        let count_end = header_end + 8;
        let param_count = u64::from_le_bytes(
            bytes
                .get(header_end..count_end)
                .ok_or_else(|| corrupt("missing parameter count"))?
                .try_into()
                .unwrap(),
        ) as usize;
        let blob = bytes
            .get(count_end..count_end + 8 * param_count)
            .ok_or_else(|| corrupt("truncated parameter blob"))?;
        if bytes.len() != count_end + 8 * param_count {
            return Err(corrupt("trailing bytes"));
        }
        let params = blob
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Checkpoint {
            model_spec: header.model_spec,
            class_names: header.class_names,
            run_config: header.run_config,
            history: header.history,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use leafcv_core::nn::Tensor;
    use leafcv_core::rng::SplitMix64;

    fn sample_checkpoint() -> Checkpoint {
        let spec = ModelSpec::small_cnn([1, 16, 16], 4, 11);
        let model = Model::build(&spec).unwrap();
        Checkpoint::from_model(
            &model,
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            RunConfig::default(),
            vec![EpochStats { epoch: 0, train_loss: 1.5, train_accuracy: 0.25, val_accuracy: None }],
        )
    }

    #[test]
    fn round_trip_preserves_everything_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lfck");
        let ckpt = sample_checkpoint();
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model_spec, ckpt.model_spec);
        assert_eq!(back.class_names, ckpt.class_names);
        assert_eq!(back.history, ckpt.history);
        assert_eq!(back.params.len(), ckpt.params.len());
        for (a, b) in back.params.iter().zip(&ckpt.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reloaded_model_predicts_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lfck");
        let ckpt = sample_checkpoint();
        ckpt.save(&path).unwrap();
        let original = ckpt.build_model().unwrap();
        let reloaded = Checkpoint::load(&path).unwrap().build_model().unwrap();

        let mut rng = SplitMix64::new(3);
        let data: Vec<f64> = (0..256).map(|_| rng.next_f64()).collect();
        let x = Tensor::new(vec![1, 16, 16], data);
        let (a, _) = original.forward(&x).unwrap();
        let (b, _) = reloaded.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lfck");
        let ckpt = sample_checkpoint();
        ckpt.save(&path).unwrap();

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(PipelineError::Data(_))));

        let mut flipped = bytes.clone();
        flipped[0] = b'X';
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(PipelineError::Data(_))));
    }

    #[test]
    fn parameter_count_mismatch_is_rejected() {
        let mut ckpt = sample_checkpoint();
        ckpt.params.pop();
        assert!(matches!(ckpt.build_model(), Err(PipelineError::Data(_))));
    }
}
