//! Central finite-difference gradient checking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Mode, Var};
use crate::tensor::Tensor;

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / (|analytic| + 1e-8)` over every input element.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub elements: usize,
}

/// Compares analytic gradients against central differences for
/// `loss = sum(R * f(inputs))`, with `R` a fixed random weighting.
///
/// `build` must be deterministic: it is re-run on a fresh graph (same mode
/// and seed) for every perturbation.
pub fn check_gradients<F>(build: F, inputs: &[Tensor<f64>], mode: Mode, seed: u64, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor<f64>], weights: Option<&Tensor<f64>>| -> Result<(Graph<f64>, Vec<Var>, Var, Tensor<f64>)> {
        let mut g = Graph::new(mode, seed);
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let out = build(&mut g, &vars)?;
        let shape = g.shape(out).to_vec();
        let w = match weights {
            Some(w) => w.clone(),
            None => Tensor::randn(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9)),
        };
        let wv = g.input(w.clone());
        let prod = g.mul(out, wv)?;
        let loss = g.sum(prod)?;
        Ok((g, vars, loss, w))
    };

    let (mut g, vars, loss, weights) = eval(inputs, None)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(v))))
        .collect();

    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, elements: 0 };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, a) in analytic.iter().enumerate() {
        for e in 0..a.len() {
            let orig = work[ti].data()[e];
            work[ti].data_mut()[e] = orig + h;
            let (g1, _, l1, _) = eval(&work, Some(&weights))?;
            work[ti].data_mut()[e] = orig - h;
            let (g2, _, l2, _) = eval(&work, Some(&weights))?;
            work[ti].data_mut()[e] = orig;
            let numeric = (g1.value(l1).item() - g2.value(l2).item()) / (2.0 * h);
            let an = a.data()[e];
            let abs = (an - numeric).abs();
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(abs / (an.abs() + 1e-8));
            report.elements += 1;
        }
    }
    Ok(report)
}
