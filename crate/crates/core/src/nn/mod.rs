//! Minimal neural-network engine: hand-written forward/backward passes
//! over a small layer set (conv2d, relu, maxpool, global-avg-pool,
//! dense) with a softmax cross-entropy head, SGD-momentum and Adam
//! optimizers, and a seeded training loop.
//!
//! Everything computes in f64. Parameters expose a flat layout (layers
//! in order, weight before bias) shared by the optimizers, the
//! finite-difference tests, and the checkpoint format.

mod model;
mod optim;
mod tensor;
mod train;

pub use model::{
    softmax, xent_loss_and_dlogits, BackwardResult, Cache, LayerSpec, Model, ModelSpec, NnError,
    Pad, MLP_HIDDEN,
};
pub use optim::{Optimizer, OptimizerKind, TrainConfig};
pub use tensor::Tensor;
pub use train::{train, EpochStats, TrainError};
