//! Registry of finite-difference gradient checks covering every kernel and
//! both interaction blocks end to end. All checks run in f64.

use citnet_tensor::gradcheck::{check_gradients, GradCheckReport};
use citnet_tensor::{BatchNormState, Graph, Mode, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cit;
use crate::config::CitMode;
use crate::vit::{encoder_block, EncoderVars};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> citnet_tensor::Result<Var>>;

/// One registered check. `op` is the name `--ops` filters on.
pub struct GradCase {
    pub op: &'static str,
    pub name: &'static str,
    /// Excluded from `all`; selectable only by name.
    pub hidden: bool,
    inputs: Vec<Tensor<f64>>,
    mode: Mode,
    build: Build,
}

impl GradCase {
    pub fn run(&self) -> citnet_tensor::Result<GradCheckReport> {
        check_gradients(&self.build, &self.inputs, self.mode, 5, STEP)
    }
}

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn scaled(shape: &[usize], std: f64, seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, std, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Keeps every element at least 0.1 from the ReLU kink.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    randn(shape, seed).map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v })
}

fn case(
    op: &'static str,
    name: &'static str,
    inputs: Vec<Tensor<f64>>,
    mode: Mode,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> citnet_tensor::Result<Var> + 'static,
) -> GradCase {
    GradCase { op, name, hidden: false, inputs, mode, build: Box::new(build) }
}

pub fn registry() -> Vec<GradCase> {
    let mut r = vec![
        case("conv2d", "conv2d_3x3_s2_p1", vec![randn(&[2, 3, 5, 5], 1), randn(&[4, 3, 3, 3], 2), randn(&[4], 3)], Mode::Eval, |g, v| {
            g.conv2d(v[0], v[1], Some(v[2]), 2, 1)
        }),
        case("conv2d", "conv2d_7x7_s2_p4", vec![randn(&[1, 2, 6, 6], 4), scaled(&[2, 2, 7, 7], 0.3, 5)], Mode::Eval, |g, v| {
            g.conv2d(v[0], v[1], None, 2, 4)
        }),
        case("maxpool2d", "maxpool2d_3x3_s2_p1", vec![Tensor::from_fn(&[1, 2, 5, 5], |i| ((i * 37) % 50) as f64 * 0.1)], Mode::Eval, |g, v| {
            g.maxpool2d(v[0], 3, 2, 1)
        }),
        case("relu", "relu", vec![away_from_zero(&[3, 4], 6)], Mode::Eval, |g, v| g.relu(v[0])),
        case("gelu", "gelu", vec![randn(&[3, 4], 7)], Mode::Eval, |g, v| g.gelu(v[0])),
        case("linear", "linear", vec![randn(&[2, 3, 4], 8), randn(&[4, 5], 9), randn(&[5], 10)], Mode::Eval, |g, v| {
            g.linear(v[0], v[1], Some(v[2]))
        }),
        case("layernorm", "layernorm", vec![randn(&[3, 6], 11), randn(&[6], 12), randn(&[6], 13)], Mode::Eval, |g, v| {
            g.layernorm(v[0], v[1], v[2], 1e-5)
        }),
        case("softmax", "softmax", vec![randn(&[3, 5], 14)], Mode::Eval, |g, v| g.softmax(v[0], 1)),
        case("attention", "attention", vec![randn(&[2, 3, 4], 15), randn(&[2, 5, 4], 16), randn(&[2, 5, 3], 17)], Mode::Eval, |g, v| {
            g.attention(v[0], v[1], v[2])
        }),
        case(
            "mha",
            "multi_head_attention",
            vec![randn(&[2, 3, 8], 18), scaled(&[8, 8], 0.3, 19), scaled(&[8, 8], 0.3, 20), scaled(&[8, 8], 0.3, 21), scaled(&[8, 8], 0.3, 22)],
            Mode::Eval,
            |g, v| g.multi_head_attention(v[0], v[1], v[2], v[3], v[4], 2),
        ),
        case(
            "mlp_block",
            "mlp_block",
            vec![randn(&[2, 4], 23), randn(&[4, 8], 24), randn(&[8], 25), randn(&[8, 4], 26), randn(&[4], 27)],
            Mode::Train,
            |g, v| g.mlp_block(v[0], v[1], v[2], v[3], v[4], 0.2),
        ),
        case("reduce_mean_spatial", "reduce_mean_spatial", vec![randn(&[2, 3, 3, 2], 28)], Mode::Eval, |g, v| {
            g.reduce_mean_spatial(v[0])
        }),
        case("shape_ops", "reshape_permute", vec![randn(&[2, 6], 29)], Mode::Eval, |g, v| {
            let r = g.reshape(v[0], &[2, 3, 2])?;
            g.permute(r, &[2, 0, 1])
        }),
        case("shape_ops", "unsqueeze_expand_squeeze", vec![randn(&[2, 3], 30)], Mode::Eval, |g, v| {
            let u = g.unsqueeze(v[0], 1)?;
            let e = g.expand(u, &[2, 4, 3])?;
            let s = g.select(e, 1, 2)?;
            let u = g.unsqueeze(s, 0)?;
            g.squeeze(u, 0)
        }),
        case("shape_ops", "concat_select", vec![randn(&[2, 2, 3], 31), randn(&[2, 4, 3], 32)], Mode::Eval, |g, v| {
            let c = g.concat(&[v[0], v[1]], 1)?;
            let s = g.select(c, 2, 1)?;
            g.mean_axis(s, 0)
        }),
        case("cross_entropy", "cross_entropy", vec![randn(&[4, 3], 33)], Mode::Eval, |g, v| g.cross_entropy(v[0], &[0, 2, 1, 2])),
        case("dropout", "dropout", vec![randn(&[4, 6], 34)], Mode::Train, |g, v| g.dropout(v[0], 0.3)),
    ];
    let rm = Tensor::from_f64(&[3], &[0.1, -0.2, 0.3]).expect("static shape");
    let rv = Tensor::from_f64(&[3], &[0.5, 1.5, 2.0]).expect("static shape");
    for (name, mode) in [("batchnorm_train", Mode::Train), ("batchnorm_eval", Mode::Eval)] {
        let (rm, rv) = (rm.clone(), rv.clone());
        r.push(case("batchnorm", name, vec![randn(&[2, 3, 2, 2], 35), randn(&[3], 36), randn(&[3], 37)], mode, move |g, v| {
            let st = BatchNormState { running_mean: &rm, running_var: &rv, momentum: 0.1, eps: 1e-5 };
            Ok(g.batchnorm2d(v[0], v[1], v[2], st)?.0)
        }));
    }
    r.push(case(
        "encoder_block",
        "encoder_block",
        vec![
            randn(&[2, 3, 8], 38),
            randn(&[8], 39),
            randn(&[8], 40),
            scaled(&[8, 8], 0.3, 41),
            scaled(&[8, 8], 0.3, 42),
            scaled(&[8, 8], 0.3, 43),
            scaled(&[8, 8], 0.3, 44),
            randn(&[8], 45),
            randn(&[8], 46),
            scaled(&[8, 16], 0.3, 47),
            randn(&[16], 48),
            scaled(&[16, 8], 0.3, 49),
            randn(&[8], 50),
        ],
        Mode::Train,
        |g, v| {
            let p = EncoderVars {
                ln1_gamma: v[1],
                ln1_beta: v[2],
                wq: v[3],
                wk: v[4],
                wv: v[5],
                wo: v[6],
                ln2_gamma: v[7],
                ln2_beta: v[8],
                fc1_weight: v[9],
                fc1_bias: v[10],
                fc2_weight: v[11],
                fc2_bias: v[12],
            };
            encoder_block(g, v[0], &p, 2, 0.2)
        },
    ));
    let l2g_inputs = || vec![randn(&[2, 3, 3, 2], 51), randn(&[2, 2, 4], 52), randn(&[3, 4], 53), randn(&[4], 54)];
    for (name, mode, keep) in [
        ("l2g_double", CitMode::Double, true),
        ("l2g_single_token", CitMode::SingleToken, true),
        ("l2g_no_tfm", CitMode::Double, false),
    ] {
        r.push(case("l2g", name, l2g_inputs(), Mode::Eval, move |g, v| cit::l2g(g, v[0], v[1], v[2], v[3], mode, keep)));
    }
    for (name, keep) in [("g2l", true), ("g2l_no_cfm", false)] {
        let cin = if keep { 3 + 4 } else { 4 };
        r.push(case(
            "g2l",
            name,
            vec![randn(&[2, 2, 4], 55), randn(&[2, 3, 2, 2], 56), randn(&[3, cin, 1, 1], 57), randn(&[3], 58)],
            Mode::Eval,
            move |g, v| cit::g2l(g, v[0], v[1], v[2], v[3], keep),
        ));
    }
    let mut broken = case("fixture_broken", "fixture_broken", vec![randn(&[5], 59)], Mode::Eval, |g, v| {
        let value = g.value(v[0]).map(|x| x * x);
        // Claims d(x^2)/dx = x.
        g.custom(
            "broken_square",
            &[v[0]],
            value,
            Box::new(|inputs, _out, gout| {
                let mut d = gout.clone();
                for (d, x) in d.data_mut().iter_mut().zip(inputs[0].data()) {
                    *d *= x;
                }
                vec![Some(d)]
            }),
        )
    });
    broken.hidden = true;
    r.push(broken);
    r
}

/// Distinct visible op names in registry order.
pub fn op_names() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = Vec::new();
    for c in registry() {
        if !c.hidden && !names.contains(&c.op) {
            names.push(c.op);
        }
    }
    names
}

/// Cases matching `ops`; `"all"` selects every visible case. Unknown names
/// are returned as the error.
pub fn select(ops: &[String]) -> Result<Vec<GradCase>, Vec<String>> {
    let all = registry();
    let known: Vec<&str> = all.iter().map(|c| c.op).collect();
    let unknown: Vec<String> = ops.iter().filter(|o| *o != "all" && !known.contains(&o.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(unknown);
    }
    let want_all = ops.iter().any(|o| o == "all");
    Ok(all
        .into_iter()
        .filter(|c| (want_all && !c.hidden) || ops.iter().any(|o| o == c.op))
        .collect())
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub op: &'static str,
    pub name: &'static str,
    pub outcome: Result<GradCheckReport, String>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.max_rel_error < TOLERANCE)
    }
}

pub fn run_cases(cases: &[GradCase]) -> Vec<CaseResult> {
    cases
        .iter()
        .map(|c| CaseResult { op: c.op, name: c.name, outcome: c.run().map_err(|e| e.to_string()) })
        .collect()
}

/// Worst relative error per op, in registry order; `None` when a case errored.
pub fn worst_per_op(results: &[CaseResult]) -> Vec<(&'static str, Option<f64>, bool)> {
    let mut out: Vec<(&'static str, Option<f64>, bool)> = Vec::new();
    for r in results {
        let err = r.outcome.as_ref().ok().map(|x| x.max_rel_error);
        match out.iter_mut().find(|(op, _, _)| *op == r.op) {
            Some(entry) => {
                entry.1 = match (entry.1, err) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
                entry.2 &= r.passed();
            }
            None => out.push((r.op, err, r.passed())),
        }
    }
    out
}
