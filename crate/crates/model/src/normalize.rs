//! Per-band `log1p` followed by a z-score fitted on the training split.

use citnet_signal::SpatialFrequencyGrid;
use citnet_tensor::{ModelParams, Tensor};

use crate::error::{ModelError, Result};

/// Statistics are taken over occupied cells only: a cell is occupied when
/// any training grid has a nonzero value there in any band. Unoccupied
/// cells map to 0 so the empty scalp area carries no signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `[height * width]`.
    pub mask: Vec<bool>,
}

impl Normalizer {
    pub fn fit(train: &[&SpatialFrequencyGrid]) -> Result<Self> {
        let first = train.first().ok_or_else(|| ModelError::Data("cannot fit a normalizer on an empty split".into()))?;
        let [bands, height, width] = first.shape();
        let cells = height * width;
        let mut mask = vec![false; cells];
        for g in train {
            if g.shape() != first.shape() {
                return Err(ModelError::Data(format!("grid shape {:?} differs from {:?}", g.shape(), first.shape())));
            }
            for b in 0..bands {
                for (m, &v) in mask.iter_mut().zip(g.band(b)) {
                    *m |= v != 0.0;
                }
            }
        }
        let occupied = mask.iter().filter(|&&m| m).count();
        let mut mean = vec![0.0; bands];
        let mut std = vec![1.0; bands];
        if occupied > 0 {
            let count = (occupied * train.len()) as f64;
            for b in 0..bands {
                let (mut s, mut s2) = (0.0f64, 0.0f64);
                for g in train {
                    for (&m, &v) in mask.iter().zip(g.band(b)) {
                        if m {
                            let l = (v as f64).ln_1p();
                            s += l;
                            s2 += l * l;
                        }
                    }
                }
                let mu = s / count;
                let var = (s2 / count - mu * mu).max(0.0);
                // Rounded to f32 so the checkpointed statistics are the ones trained with.
                mean[b] = mu as f32 as f64;
                // A constant band stays centred rather than blowing up.
                std[b] = if var.sqrt() > 1e-12 { var.sqrt() as f32 as f64 } else { 1.0 };
            }
        }
        Ok(Normalizer { bands, height, width, mean, std, mask })
    }

    pub fn apply(&self, g: &SpatialFrequencyGrid) -> Result<Vec<f32>> {
        if g.shape() != [self.bands, self.height, self.width] {
            return Err(ModelError::Data(format!(
                "grid shape {:?} does not match the normalizer's {:?}",
                g.shape(),
                [self.bands, self.height, self.width]
            )));
        }
        let mut out = Vec::with_capacity(g.data.len());
        for b in 0..self.bands {
            for (&m, &v) in self.mask.iter().zip(g.band(b)) {
                out.push(if m { (((v as f64).ln_1p() - self.mean[b]) / self.std[b]) as f32 } else { 0.0 });
            }
        }
        Ok(out)
    }

    /// Stored as `norm.mean`, `norm.std` and `norm.mask` entries so it can
    /// share the checkpoint format.
    pub fn to_params(&self) -> Result<ModelParams<f32>> {
        let mut p = ModelParams::new();
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        p.insert("norm.mean", Tensor::new(&[self.bands], f(&self.mean))?, false)?;
        p.insert("norm.std", Tensor::new(&[self.bands], f(&self.std))?, false)?;
        let mask = self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        p.insert("norm.mask", Tensor::new(&[self.height, self.width], mask)?, false)?;
        Ok(p)
    }

    pub fn from_params(p: &ModelParams<f32>) -> Result<Self> {
        let mean = p.get("norm.mean")?;
        let std = p.get("norm.std")?;
        let mask = p.get("norm.mask")?;
        if mask.shape().len() != 2 || mean.shape() != std.shape() {
            return Err(ModelError::Data("malformed normalizer entries".into()));
        }
        Ok(Normalizer {
            bands: mean.len(),
            height: mask.shape()[0],
            width: mask.shape()[1],
            mean: mean.data().iter().map(|&x| x as f64).collect(),
            std: std.data().iter().map(|&x| x as f64).collect(),
            mask: mask.data().iter().map(|&x| x != 0.0).collect(),
        })
    }
}
