use std::collections::HashMap;

use citnet_signal::dataset::write_dataset;
use citnet_signal::io::{read_labels, read_recording};
use citnet_signal::build_representation;
use log::info;
use serde_json::json;

use super::{create_out, feature_config, feature_json};
use crate::args::ExtractArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::start("extract");
    let cfg = feature_config(&a.features)?;
    if !(a.sample_rate.is_finite() && a.sample_rate > 0.0) {
        return Err(CliError::usage(format!("--sample-rate must be positive, got {}", a.sample_rate)));
    }
    let labels: HashMap<String, usize> = match &a.labels {
        Some(p) => {
            manifest.input_file(p)?;
            read_labels(p)?
        }
        None => HashMap::new(),
    };

    let mut recordings = Vec::new();
    for path in &a.inputs {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::usage(format!("{}: not a file path", path.display())))?;
        if recordings.iter().any(|(other, _)| other == &id) {
            return Err(CliError::usage(format!("two inputs share the recording id `{id}`")));
        }
        manifest.input_file(path)?;
        let mut rec = read_recording(path, a.sample_rate)?;
        if let Some(&l) = labels.get(&id) {
            rec.label = Some(l);
        }
        let grids = build_representation(&rec, &cfg).map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("{}: {}", path.display(), err.message);
            err
        })?;
        info!("{id}: {} windows", grids.len());
        recordings.push((id, grids));
    }

    create_out(&a.out)?;
    let entries = write_dataset(&a.out, &recordings)?;
    println!("wrote {} grids from {} recordings to {}", entries.len(), recordings.len(), a.out.display());
    manifest.config = feature_json(&cfg);
    manifest.config["csv_sample_rate"] = json!(a.sample_rate);
    manifest.summary = json!({ "recordings": recordings.len(), "grids": entries.len() });
    manifest.finish(&a.out)?;
    Ok(())
}
