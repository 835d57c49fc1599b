mod ablate;
mod audit;
mod evaluate;
mod extract;
mod gradcheck;
mod synth;
mod train;

use std::fs;
use std::path::Path;

use citnet_model::trainer::Dataset;
use citnet_model::{ExperimentConfig, Variant};
use citnet_signal::bands::parse_band_edges;
use citnet_signal::dataset::read_dataset;
use citnet_signal::{ElectrodeLayout, FeatureConfig};

use crate::args::{Command, FeatureArgs};
use crate::error::{CliError, Result};

pub use ablate::ablate;
pub use audit::shape_audit;
pub use evaluate::evaluate;
pub use extract::extract;
pub use gradcheck::gradcheck;
pub use synth::synth;
pub use train::train;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract(a) => extract(&a),
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::ShapeAudit(a) => shape_audit(&a),
    }
}

fn feature_config(a: &FeatureArgs) -> Result<FeatureConfig> {
    if !(a.window.is_finite() && a.window > 0.0) {
        return Err(CliError::usage(format!("--window must be a positive number of seconds, got {}", a.window)));
    }
    let mut cfg = FeatureConfig { window_seconds: a.window, ..FeatureConfig::default() };
    if let Some(b) = &a.bands {
        cfg.bands = parse_band_edges(b).map_err(|e| CliError::usage(format!("--bands: {e}")))?;
    }
    if let Some(path) = &a.layout {
        cfg.layout = ElectrodeLayout::load(path)?;
    }
    Ok(cfg)
}

fn feature_json(cfg: &FeatureConfig) -> serde_json::Value {
    serde_json::json!({
        "window_seconds": cfg.window_seconds,
        "bands": cfg.bands.iter().map(|b| [b.lo_hz, b.hi_hz]).collect::<Vec<_>>(),
        "grid": [cfg.layout.height(), cfg.layout.width()],
    })
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p).map_err(|e| match e {
            citnet_model::ModelError::Io { .. } => CliError::config(e.to_string()),
            e => e.into(),
        })?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_variant(s: &str) -> Result<Variant> {
    s.parse().map_err(|_| CliError::usage(format!("unknown variant `{s}`; expected one of {}", Variant::names())))
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    let grids = read_dataset(dir)?.into_iter().map(|(_, g)| g).collect();
    Ok(Dataset::new(grids)?)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
