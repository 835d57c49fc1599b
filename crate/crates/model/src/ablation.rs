//! Trains every variant per seed and tabulates test accuracy.

use std::fmt::Write as _;

use log::warn;

use crate::config::{ExperimentConfig, Variant};
use crate::error::{ModelError, Result};
use crate::trainer::{train, Dataset, Metrics, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// Best test accuracy of each seed that completed.
    pub accuracies: Vec<f64>,
    /// `(seed, error)` for every seed that failed.
    pub failures: Vec<(u64, String)>,
}

impl AblationRow {
    pub fn label(&self) -> &'static str {
        self.variant.label()
    }

    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.accuracies.len();
        (n > 0).then(|| self.accuracies.iter().sum::<f64>() / n as f64)
    }

    /// Sample standard deviation across seeds; absent below two runs.
    pub fn std(&self) -> Option<f64> {
        let n = self.accuracies.len();
        if n < 2 {
            return None;
        }
        let m = self.mean()?;
        let ss: f64 = self.accuracies.iter().map(|a| (a - m) * (a - m)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    }

    pub fn status(&self) -> String {
        if self.failures.is_empty() {
            "ok".into()
        } else {
            let seeds: Vec<String> = self.failures.iter().map(|(s, _)| s.to_string()).collect();
            format!("failed (seeds {})", seeds.join(" "))
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    /// One row per variant in [`Variant::ALL`] order.
    pub rows: Vec<AblationRow>,
    pub runs: Vec<Metrics>,
}

pub const SUMMARY_HEADER: &str = "variant,mean_acc,std_acc,n_seeds,label,status";

/// Major-component rows, then CIT-component rows; the full model closes both.
pub const COMPONENT_ROWS: [Variant; 4] = [Variant::CnnOnly, Variant::TransformerOnly, Variant::BaselineConcat, Variant::Full];
pub const CIT_ROWS: [Variant; 5] =
    [Variant::L2gOnly, Variant::L2gOnlyNoTfm, Variant::G2lOnly, Variant::G2lOnlyNoCfm, Variant::Full];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> &AblationRow {
        self.rows.iter().find(|r| r.variant == v).expect("every variant has a row")
    }

    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(AblationRow::failed)
    }

    /// `n_seeds` counts completed runs.
    pub fn summary_csv(&self) -> String {
        let mut s = format!("{SUMMARY_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.variant,
                fmt_opt(r.mean()),
                fmt_opt(r.std()),
                r.accuracies.len(),
                quote(r.label()),
                quote(&r.status())
            );
        }
        s
    }

    /// Fixed-width table in percent. STD is taken across seeds.
    pub fn text_table(&self) -> String {
        let width = Variant::ALL.iter().map(|v| v.label().len()).max().unwrap_or(0);
        let mut s = String::new();
        let pct = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
        for (title, rows) in [
            ("Ablation of the major components", &COMPONENT_ROWS[..]),
            ("Ablation of the CIT module components", &CIT_ROWS[..]),
        ] {
            let _ = writeln!(s, "{title}");
            let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>5}  status", "Method", "ACC (%)", "STD (%)", "seeds");
            let _ = writeln!(s, "{}", "-".repeat(width + 40));
            for &v in rows {
                let r = self.row(v);
                let _ = writeln!(
                    s,
                    "{:<width$}  {:>8}  {:>8}  {:>5}  {}",
                    r.label(),
                    pct(r.mean()),
                    pct(r.std()),
                    r.accuracies.len(),
                    r.status()
                );
            }
            let _ = writeln!(s);
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "ACC is the best test accuracy per run (optimistic checkpoint selection); STD is across seeds {}.",
            seeds.join(",")
        );
        s
    }
}

pub fn run_ablation_suite(ds: &Dataset, base: &ExperimentConfig, seeds: &[u64]) -> Result<AblationReport> {
    run_ablation_suite_with(ds, base, seeds, train)
}

/// Runs `train_fn` for every variant and seed. A failing run is recorded on
/// its row and the suite carries on.
pub fn run_ablation_suite_with<F>(ds: &Dataset, base: &ExperimentConfig, seeds: &[u64], mut train_fn: F) -> Result<AblationReport>
where
    F: FnMut(&Dataset, &ExperimentConfig) -> Result<TrainOutcome>,
{
    if seeds.is_empty() {
        return Err(ModelError::Config("the ablation suite needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for v in Variant::ALL {
        let mut row = AblationRow { variant: v, accuracies: Vec::new(), failures: Vec::new() };
        for &seed in seeds {
            let cfg = ExperimentConfig { variant: v, seed, ..base.clone() };
            match train_fn(ds, &cfg) {
                Ok(out) => {
                    row.accuracies.push(out.metrics.best_test_acc);
                    runs.push(out.metrics);
                }
                Err(e) => {
                    warn!("{v} seed {seed} failed: {e}");
                    row.failures.push((seed, e.to_string()));
                }
            }
        }
        rows.push(row);
    }
    Ok(AblationReport { seeds: seeds.to_vec(), rows, runs })
}
