//! Masked Sinkhorn-divergence imputation with a sample-size estimator.

pub mod bench;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod dim;
pub mod matrix;
pub mod neural;
pub mod orchestrator;
pub mod sinkhorn;
pub mod sse;
pub mod synth;

pub use dim::{impute, train, DimConfig, TrainedImputer};
pub use matrix::{DenseMatrix, MaskMatrix, MaskedDataset};
pub use orchestrator::{run, run_full_baseline, RunReport, ScisConfig};
pub use sse::{estimate_min_size, SizeEstimate, SseConfig};
