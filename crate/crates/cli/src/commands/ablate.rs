use citnet_model::ablation::run_ablation_suite;
use citnet_model::trainer::metrics_csv;
use log::warn;
use serde_json::json;

use super::{create_out, load_config, load_dataset, write};
use crate::args::AblateArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const RUNS_CSV: &str = "metrics.csv";

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().map_err(|_| CliError::usage(format!("--seeds: `{t}` is not a seed"))))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(CliError::usage("--seeds needs at least one seed, e.g. --seeds 1,2,3"));
    }
    Ok(seeds)
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::start("ablate");
    let seeds = parse_seeds(&a.seeds)?;
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    if let Some(p) = &a.config {
        manifest.input_file(p)?;
    }
    let ds = load_dataset(&a.data)?;
    manifest.input_dir(&a.data)?;

    let report = run_ablation_suite(&ds, &cfg, &seeds)?;
    create_out(&a.out)?;
    let table = report.text_table();
    write(&a.out.join(SUMMARY_CSV), &report.summary_csv())?;
    write(&a.out.join(SUMMARY_TXT), &table)?;
    write(&a.out.join(RUNS_CSV), &metrics_csv(&report.runs))?;
    print!("{table}");
    if report.any_failed() {
        let failed: Vec<&str> = report.rows.iter().filter(|r| r.failed()).map(|r| r.variant.as_str()).collect();
        warn!("some runs failed: {}", failed.join(", "));
        eprintln!("warning: failed runs in {}; see the status column", failed.join(", "));
    }

    manifest.config = serde_json::to_value(&cfg).expect("config serializes");
    manifest.summary = json!({
        "seeds": seeds,
        "rows": report.rows.iter().map(|r| json!({
            "variant": r.variant.as_str(),
            "label": r.label(),
            "mean_acc": r.mean(),
            "std_acc": r.std(),
            "n_seeds": r.accuracies.len(),
            "status": r.status(),
        })).collect::<Vec<_>>(),
    });
    manifest.finish(&a.out)?;
    Ok(())
}
