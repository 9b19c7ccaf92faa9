//! Algorithmic core of the leafcv pipeline.
//!
//! Everything here is pure computation over in-memory buffers: image
//! representation and resampling, stochastic augmentation transforms,
//! HOG/LBP descriptors, a small hand-written neural-net engine with
//! backprop, Grad-CAM heatmaps, and confusion-matrix metrics. The crate
//! is `no_std`-compatible (with `alloc`); file formats, dataset handling,
//! and the CLI live in the companion `leafcv` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod fmath;

pub mod augment;
pub mod features;
pub mod gradcam;
pub mod imaging;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use imaging::ImageBuffer;
pub use rng::SplitMix64;
