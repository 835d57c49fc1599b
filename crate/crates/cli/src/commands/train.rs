use std::fmt::Write as _;

use citnet_model::network::{check_params, trainable_count};
use citnet_model::trainer::{metrics_csv, train_from};
use citnet_model::{ModelError, ModelSpec};
use citnet_tensor::checkpoint;
use serde_json::json;

use super::{create_out, load_config, load_dataset, parse_variant, write};
use crate::args::TrainArgs;
use crate::error::{CliError, Result};
use crate::manifest::ManifestBuilder;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CKPT: &str = "best.ckpt";
pub const LAST_CKPT: &str = "last.ckpt";
pub const NORMALIZER_CKPT: &str = "normalizer.ckpt";
pub const SPLIT_FILE: &str = "split.csv";

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::start("train");
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = &a.variant {
        cfg.variant = parse_variant(v)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let spec = ModelSpec::from_config(&cfg)?;
    if let Some(p) = &a.config {
        manifest.input_file(p)?;
    }
    let ds = load_dataset(&a.data)?;
    manifest.input_dir(&a.data)?;

    let init = match &a.resume {
        Some(path) => {
            let params = checkpoint::load::<f32>(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            check_params(&spec, &params).map_err(|e| match e {
                ModelError::Architecture(m) => {
                    CliError::data(format!("{}: checkpoint does not fit variant {}: {m}", path.display(), cfg.variant))
                }
                e => e.into(),
            })?;
            manifest.input_file(path)?;
            Some(params)
        }
        None => None,
    };

    let out = train_from(&ds, &cfg, init)?;
    create_out(&a.out)?;
    write(&a.out.join(CONFIG_FILE), &cfg.to_toml())?;
    write(&a.out.join(METRICS_FILE), &metrics_csv(std::slice::from_ref(&out.metrics)))?;
    checkpoint::save(&out.params, &a.out.join(BEST_CKPT))?;
    checkpoint::save(&out.last_params, &a.out.join(LAST_CKPT))?;
    if let Some(n) = &out.normalizer {
        checkpoint::save(&n.to_params()?, &a.out.join(NORMALIZER_CKPT))?;
    }
    let mut split = String::from("index,split\n");
    for (name, idx) in [("train", &out.split.train), ("test", &out.split.test)] {
        for i in idx {
            let _ = writeln!(split, "{i},{name}");
        }
    }
    write(&a.out.join(SPLIT_FILE), &split)?;

    let m = &out.metrics;
    let last = m.last();
    println!("variant {} seed {}: {} epochs, {} steps", cfg.variant, cfg.seed, m.epochs.len(), m.step_losses.len());
    if let Some(e) = last {
        println!("final train loss {:.4} train acc {:.4}", e.train_loss, e.train_acc);
        println!("final test loss {:.4} test acc {:.4}", e.test_loss, e.test_acc);
        println!("best test acc {:.4} at epoch {}", m.best_test_acc, m.best_epoch);
    }
    println!("final ACC {:.4}", last.map_or(0.0, |e| e.test_acc));

    manifest.seed = Some(cfg.seed);
    manifest.config = serde_json::to_value(&cfg).expect("config serializes");
    manifest.summary = json!({
        "variant": cfg.variant.as_str(),
        "epochs_run": m.epochs.len(),
        "steps": m.step_losses.len(),
        "best_epoch": m.best_epoch,
        "best_test_acc": m.best_test_acc,
        "final_train_acc": last.map(|e| e.train_acc),
        "final_test_acc": last.map(|e| e.test_acc),
        "trainable_parameters": trainable_count(&spec),
        "train_samples": out.split.train.len(),
        "test_samples": out.split.test.len(),
    });
    manifest.finish(&a.out)?;
    Ok(())
}
