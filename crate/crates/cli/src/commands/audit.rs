use citnet_model::network::{shape_audit as audit, trainable_count};
use citnet_model::ModelSpec;

use super::load_config;
use crate::args::ShapeAuditArgs;
use crate::error::{CliError, Result};

pub fn shape_audit(a: &ShapeAuditArgs) -> Result<()> {
    if a.batch == 0 {
        return Err(CliError::usage("--batch must be at least 1"));
    }
    let cfg = load_config(a.config.as_deref())?;
    let spec = ModelSpec::from_config(&cfg)?;
    let report = audit(&spec, a.batch)?;
    print!("{}", report.render());
    println!("classifier input width {}", spec.head_width());
    println!("trainable parameters {}", trainable_count(&spec));
    if !report.passed() {
        for m in &report.mismatches {
            eprintln!("mismatch: {m}");
        }
        return Err(CliError::verify(format!("{} shape mismatch(es)", report.mismatches.len())));
    }
    println!("shape audit PASS");
    Ok(())
}
