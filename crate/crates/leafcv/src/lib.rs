//! Pipeline layer of leafcv: dataset ingestion and splits, feature
//! caches, training runs, evaluation reports, Grad-CAM batch rendering,
//! SVG charts, and the on-disk formats behind all of them.

pub mod cache;
pub mod chart;
pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod dataset;
pub mod error;
pub mod runner;
pub mod synthdata;

pub use leafcv_core as core;
