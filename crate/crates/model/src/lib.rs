//! The CIT network: a CNN branch and a Transformer branch that exchange
//! features after each of the first three stages, plus training,
//! evaluation and the ablation suite.

pub mod ablation;
pub mod cit;
pub mod cnn;
pub mod config;
mod error;
pub mod gradsuite;
pub mod network;
pub mod normalize;
pub mod trainer;
pub mod vit;

pub use config::{CitMode, ExperimentConfig, PatchMode, Variant};
pub use error::{ModelError, Result};
pub use network::{forward, init_params, shape_audit, ModelSpec};
pub use trainer::{evaluate, train, Dataset, Metrics, TrainOutcome};
