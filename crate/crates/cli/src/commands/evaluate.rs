use citnet_model::normalize::Normalizer;
use citnet_model::{evaluate as score, ExperimentConfig, ModelSpec};
use citnet_tensor::checkpoint;
use serde_json::json;

use super::train::{BEST_CKPT, CONFIG_FILE, LAST_CKPT, NORMALIZER_CKPT};
use super::{create_out, load_dataset, write};
use crate::args::EvaluateArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::start("evaluate");
    let ckpt = match a.checkpoint.as_str() {
        "best" => BEST_CKPT,
        "last" => LAST_CKPT,
        other => return Err(CliError::usage(format!("--checkpoint must be `best` or `last`, got `{other}`"))),
    };
    let cfg = ExperimentConfig::load(&a.run.join(CONFIG_FILE))?;
    let spec = ModelSpec::from_config(&cfg)?;
    let ckpt_path = a.run.join(ckpt);
    let params = checkpoint::load::<f32>(&ckpt_path).map_err(|e| CliError::data(format!("{}: {e}", ckpt_path.display())))?;
    let norm_path = a.run.join(NORMALIZER_CKPT);
    let normalizer = if cfg.normalize {
        let p = checkpoint::load::<f32>(&norm_path).map_err(|e| CliError::data(format!("{}: {e}", norm_path.display())))?;
        Some(Normalizer::from_params(&p)?)
    } else {
        None
    };
    let ds = load_dataset(&a.data)?;
    let m = score(&params, &spec, normalizer.as_ref(), &ds, cfg.batch_size)?;
    println!("variant {} on {} samples: loss {:.4} accuracy {:.4}", cfg.variant, m.n, m.loss, m.accuracy);

    if let Some(out) = &a.out {
        manifest.input_file(&ckpt_path)?;
        manifest.input_dir(&a.data)?;
        create_out(out)?;
        write(&out.join("eval.csv"), &format!("variant,n,loss,accuracy\n{},{},{},{}\n", cfg.variant, m.n, m.loss, m.accuracy))?;
        manifest.seed = Some(cfg.seed);
        manifest.config = json!({ "run": a.run.display().to_string(), "checkpoint": a.checkpoint });
        manifest.summary = json!({ "n": m.n, "loss": m.loss, "accuracy": m.accuracy });
        manifest.finish(out)?;
    }
    Ok(())
}
