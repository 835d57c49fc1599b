use std::fs;

use citnet_signal::dataset::write_dataset;
use citnet_signal::{synth_grids, ClassSpec};
use serde_json::json;

use super::{create_out, feature_config, feature_json};
use crate::args::SynthArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;

/// True when the class spec text has no `class` directive at all.
fn defines_no_class(text: &str) -> bool {
    !text.lines().any(|l| l.split('#').next().unwrap_or("").split_whitespace().next() == Some("class"))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::start("synth");
    manifest.seed = Some(a.seed);
    let cfg = feature_config(&a.features)?;
    if a.per_class == 0 {
        return Err(CliError::usage("--per-class must be at least 1"));
    }
    let text = fs::read_to_string(&a.classes).map_err(|e| CliError::io(&a.classes, e))?;
    if defines_no_class(&text) {
        return Err(CliError::usage(format!("{}: the class spec defines no classes", a.classes.display())));
    }
    let spec = ClassSpec::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", a.classes.display())))?;
    manifest.input_file(&a.classes)?;

    let recordings = synth_grids(&spec, a.per_class, &cfg, a.seed)?;
    create_out(&a.out)?;
    let entries = write_dataset(&a.out, &recordings)?;
    println!(
        "wrote {} grids ({} classes x {} recordings) to {}",
        entries.len(),
        spec.num_classes(),
        a.per_class,
        a.out.display()
    );
    manifest.config = feature_json(&cfg);
    manifest.config["per_class"] = json!(a.per_class);
    manifest.summary = json!({ "classes": spec.num_classes(), "recordings": recordings.len(), "grids": entries.len() });
    manifest.finish(&a.out)?;
    Ok(())
}
