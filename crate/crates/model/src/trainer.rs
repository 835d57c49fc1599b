//! Dataset split, mini-batch Adam training on cross-entropy, and evaluation.

use std::fmt::Write as _;

use citnet_signal::SpatialFrequencyGrid;
use citnet_tensor::{Adam, AdamConfig, Graph, Mode, ModelParams, Scalar, Tensor};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Variant};
use crate::error::{ModelError, Result};
use crate::network::{apply_bn_updates, check_params, forward, init_params, ModelSpec};
use crate::normalize::Normalizer;

/// Labelled grids of one shape.
#[derive(Debug, Clone)]
pub struct Dataset {
    grids: Vec<SpatialFrequencyGrid>,
}

impl Dataset {
    pub fn new(grids: Vec<SpatialFrequencyGrid>) -> Result<Self> {
        let first = grids.first().ok_or_else(|| ModelError::Data("dataset is empty".into()))?;
        let shape = first.shape();
        for (i, g) in grids.iter().enumerate() {
            if g.shape() != shape {
                return Err(ModelError::Data(format!("sample {i} has shape {:?}, expected {:?}", g.shape(), shape)));
            }
            if g.label.is_none() {
                return Err(ModelError::Data(format!("sample {i} has no label")));
            }
        }
        Ok(Dataset { grids })
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.grids[0].shape()
    }

    pub fn grids(&self) -> &[SpatialFrequencyGrid] {
        &self.grids
    }

    pub fn label(&self, i: usize) -> usize {
        self.grids[i].label.expect("checked on construction")
    }

    /// Fails when a label is outside `0..num_classes`.
    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        match (0..self.len()).find(|&i| self.label(i) >= num_classes) {
            Some(i) => Err(ModelError::Data(format!(
                "sample {i} has label {} but the model has {num_classes} classes",
                self.label(i)
            ))),
            None => Ok(()),
        }
    }

    fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        let want = [spec.in_channels, spec.grid_height, spec.grid_width];
        if self.shape() != want {
            return Err(ModelError::Data(format!("grids are {:?} but the config expects {:?}", self.shape(), want)));
        }
        self.check_classes(spec.num_classes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts at `round(n * train_fraction)`.
pub fn split_indices(n: usize, seed: u64, train_fraction: f64) -> Result<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n as f64 * train_fraction).round() as usize;
    if cut == 0 || cut >= n {
        return Err(ModelError::Data(format!(
            "{n} samples at train fraction {train_fraction} leave an empty split"
        )));
    }
    let test = idx.split_off(cut);
    Ok(Split { train: idx, test })
}

/// Normalized samples, flattened `[bands * H * W]` each.
#[derive(Debug, Clone)]
pub struct Prepared {
    shape: [usize; 3],
    x: Vec<Vec<f32>>,
    labels: Vec<usize>,
}

impl Prepared {
    pub fn new(ds: &Dataset, norm: Option<&Normalizer>) -> Result<Self> {
        let x = ds
            .grids
            .iter()
            .map(|g| match norm {
                Some(n) => n.apply(g),
                None => Ok(g.data.clone()),
            })
            .collect::<Result<_>>()?;
        Ok(Prepared { shape: ds.shape(), x, labels: (0..ds.len()).map(|i| ds.label(i)).collect() })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let [b, h, w] = self.shape;
        let mut data = Vec::with_capacity(idx.len() * b * h * w);
        for &i in idx {
            data.extend(self.x[i].iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        let t = Tensor::new(&[idx.len(), b, h, w], data).expect("batch extent");
        (t, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub variant: Variant,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    /// Training-mode loss of every optimizer step.
    pub step_losses: Vec<f64>,
    /// Epoch whose parameters were kept (highest test accuracy, first wins).
    pub best_epoch: usize,
    pub best_test_acc: f64,
}

impl Metrics {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn max_train_acc(&self) -> f64 {
        self.epochs.iter().map(|e| e.train_acc).fold(0.0, f64::max)
    }
}

pub const METRICS_HEADER: &str = "variant,seed,epoch,split,loss,accuracy";

/// Two rows (train, test) per epoch of every run.
pub fn metrics_csv(runs: &[Metrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for m in runs {
        for e in &m.epochs {
            let _ = writeln!(s, "{},{},{},train,{},{}", m.variant, m.seed, e.epoch, e.train_loss, e.train_acc);
            let _ = writeln!(s, "{},{},{},test,{},{}", m.variant, m.seed, e.epoch, e.test_loss, e.test_acc);
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub n: usize,
}

pub struct TrainOutcome {
    pub spec: ModelSpec,
    /// Parameters from [`Metrics::best_epoch`].
    pub params: ModelParams<f32>,
    pub last_params: ModelParams<f32>,
    pub normalizer: Option<Normalizer>,
    pub metrics: Metrics,
    pub split: Split,
}

pub fn train(ds: &Dataset, cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    train_from(ds, cfg, None)
}

/// Like [`train`], starting from `init` instead of a fresh initialization.
pub fn train_from(ds: &Dataset, cfg: &ExperimentConfig, init: Option<ModelParams<f32>>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = ModelSpec::from_config(cfg)?;
    ds.check_spec(&spec)?;
    let split = split_indices(ds.len(), cfg.seed, cfg.train_fraction)?;
    let normalizer = if cfg.normalize {
        let train: Vec<_> = split.train.iter().map(|&i| &ds.grids[i]).collect();
        Some(Normalizer::fit(&train)?)
    } else {
        None
    };
    let data = Prepared::new(ds, normalizer.as_ref())?;
    let (params, last_params, metrics) = match cfg.precision {
        64 => {
            let init = init.map(|p| p.cast::<f64>());
            let (b, l, m) = train_typed::<f64>(&spec, cfg, &data, &split, init)?;
            (b.cast(), l.cast(), m)
        }
        _ => train_typed::<f32>(&spec, cfg, &data, &split, init)?,
    };
    Ok(TrainOutcome { spec, params, last_params, normalizer, metrics, split })
}

/// Dropout stream of optimizer step `step`.
fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step as u64)
}

fn argmax_correct<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| {
            // First maximum wins.
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best == y
        })
        .count()
}

fn train_typed<T: Scalar>(
    spec: &ModelSpec,
    cfg: &ExperimentConfig,
    data: &Prepared,
    split: &Split,
    init: Option<ModelParams<T>>,
) -> Result<(ModelParams<T>, ModelParams<T>, Metrics)> {
    let mut params = match init {
        Some(p) => {
            check_params(spec, &p)?;
            p
        }
        None => init_params::<T>(spec, cfg.seed)?,
    };
    let mut adam = Adam::<T>::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0dd5_eed5);
    let mut metrics = Metrics {
        variant: spec.variant,
        seed: cfg.seed,
        epochs: Vec::new(),
        step_losses: Vec::new(),
        best_epoch: 0,
        best_test_acc: f64::NEG_INFINITY,
    };
    let mut best = params.clone();
    let mut stale = 0;
    let inject = cfg.inject_nan == Some(spec.variant);
    let mut order = split.train.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                info!("epoch {epoch}: skipping a final batch of 1 sample (batch norm needs 2)");
                continue;
            }
            let step = metrics.step_losses.len();
            let (x, labels) = data.batch::<T>(chunk);
            let mut g = Graph::<T>::new(Mode::Train, step_seed(cfg.seed, step));
            let xv = g.input(x);
            let out = forward(&mut g, &params, spec, xv, false)?;
            let loss = g.cross_entropy(out.logits, &labels)?;
            let lv = if inject { f64::NAN } else { g.value(loss).item().as_f64() };
            if !lv.is_finite() {
                return Err(ModelError::NonFiniteLoss { step });
            }
            metrics.step_losses.push(lv);
            loss_sum += lv * chunk.len() as f64;
            correct += argmax_correct(g.value(out.logits), &labels);
            seen += chunk.len();
            g.backward(loss)?;
            let grads = g.param_grads();
            adam.step(&mut params, &grads)?;
            apply_bn_updates(&mut params, out.bn_updates)?;
        }
        if seen == 0 {
            return Err(ModelError::Data("the training split yields no batch of at least 2 samples".into()));
        }
        let test = evaluate_indices(&params, spec, data, &split.test, cfg.batch_size)?;
        let (train_loss, train_acc) = if cfg.eval_train {
            let e = evaluate_indices(&params, spec, data, &split.train, cfg.batch_size)?;
            (e.loss, e.accuracy)
        } else {
            (loss_sum / seen as f64, correct as f64 / seen as f64)
        };
        let em = EpochMetrics { epoch, train_loss, train_acc, test_loss: test.loss, test_acc: test.accuracy };
        info!(
            "{} seed {} epoch {epoch}: train loss {train_loss:.4} acc {train_acc:.4}, test loss {:.4} acc {:.4}",
            spec.variant, cfg.seed, test.loss, test.accuracy
        );
        metrics.epochs.push(em);
        if test.accuracy > metrics.best_test_acc {
            metrics.best_test_acc = test.accuracy;
            metrics.best_epoch = epoch;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.target_train_acc.is_some_and(|t| train_acc >= t) {
            info!("{} seed {}: train accuracy target reached at epoch {epoch}", spec.variant, cfg.seed);
            break;
        }
        if cfg.patience > 0 && stale >= cfg.patience {
            info!("{} seed {}: no test improvement for {stale} epochs, stopping", spec.variant, cfg.seed);
            break;
        }
    }
    if metrics.epochs.is_empty() {
        warn!("{} seed {}: zero epochs requested", spec.variant, cfg.seed);
        metrics.best_test_acc = 0.0;
    }
    Ok((best, params, metrics))
}

/// Inference-mode loss and accuracy over `idx`.
pub fn evaluate_indices<T: Scalar>(
    params: &ModelParams<T>,
    spec: &ModelSpec,
    data: &Prepared,
    idx: &[usize],
    batch_size: usize,
) -> Result<EvalMetrics> {
    if idx.is_empty() {
        return Err(ModelError::Data("cannot evaluate an empty split".into()));
    }
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch::<T>(chunk);
        let mut g = Graph::<T>::new(Mode::Eval, 0);
        let xv = g.input(x);
        let out = forward(&mut g, params, spec, xv, false)?;
        let loss = g.cross_entropy(out.logits, &labels)?;
        loss_sum += g.value(loss).item().as_f64() * chunk.len() as f64;
        correct += argmax_correct(g.value(out.logits), &labels);
    }
    Ok(EvalMetrics { loss: loss_sum / idx.len() as f64, accuracy: correct as f64 / idx.len() as f64, n: idx.len() })
}

/// Scores every sample of `ds` with trained parameters.
pub fn evaluate(
    params: &ModelParams<f32>,
    spec: &ModelSpec,
    normalizer: Option<&Normalizer>,
    ds: &Dataset,
    batch_size: usize,
) -> Result<EvalMetrics> {
    check_params(spec, params)?;
    ds.check_spec(spec)?;
    let data = Prepared::new(ds, normalizer)?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    evaluate_indices(params, spec, &data, &idx, batch_size)
}
