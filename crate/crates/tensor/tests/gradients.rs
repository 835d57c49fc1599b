//! Analytic gradients against central finite differences, in f64.

use citnet_tensor::gradcheck::check_gradients;
use citnet_tensor::{BatchNormState, Graph, Mode, ModelParams, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Values bounded away from zero so kinked ops are differentiable at every sample.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    randn(shape, seed).map(|v| if v.abs() < 0.1 { v.signum() * 0.1 + v } else { v })
}

fn check<F>(name: &str, inputs: &[Tensor<f64>], mode: Mode, build: F)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> citnet_tensor::Result<Var>,
{
    let r = check_gradients(build, inputs, mode, 5, H).unwrap();
    assert!(r.max_rel_error < TOL, "{name}: rel {:.3e} abs {:.3e}", r.max_rel_error, r.max_abs_error);
    assert!(r.elements > 0);
}

#[test]
fn elementwise_and_reductions() {
    check("add", &[randn(&[2, 3], 1), randn(&[2, 3], 2)], Mode::Eval, |g, v| g.add(v[0], v[1]));
    check("mul", &[randn(&[2, 3], 1), randn(&[2, 3], 2)], Mode::Eval, |g, v| g.mul(v[0], v[1]));
    check("mul_self", &[randn(&[4], 3)], Mode::Eval, |g, v| g.mul(v[0], v[0]));
    check("scale", &[randn(&[5], 4)], Mode::Eval, |g, v| g.scale(v[0], -2.5));
    check("sum", &[randn(&[2, 2, 2], 5)], Mode::Eval, |g, v| g.sum(v[0]));
    for axis in 0..3 {
        check("mean_axis", &[randn(&[2, 3, 4], 6)], Mode::Eval, move |g, v| g.mean_axis(v[0], axis));
    }
    check("reduce_mean_spatial", &[randn(&[2, 3, 3, 2], 7)], Mode::Eval, |g, v| g.reduce_mean_spatial(v[0]));
    check("relu", &[away_from_zero(&[3, 4], 8)], Mode::Eval, |g, v| g.relu(v[0]));
    check("gelu", &[randn(&[3, 4], 9)], Mode::Eval, |g, v| g.gelu(v[0]));
}

#[test]
fn shape_ops() {
    check("reshape", &[randn(&[2, 6], 1)], Mode::Eval, |g, v| g.reshape(v[0], &[3, 4]));
    check("permute", &[randn(&[2, 3, 4], 2)], Mode::Eval, |g, v| g.permute(v[0], &[2, 0, 1]));
    check("unsqueeze_squeeze", &[randn(&[2, 3], 3)], Mode::Eval, |g, v| {
        let u = g.unsqueeze(v[0], 1)?;
        g.squeeze(u, 1)
    });
    check("expand", &[randn(&[2, 1, 3, 1], 4)], Mode::Eval, |g, v| g.expand(v[0], &[2, 4, 3, 5]));
    check("concat", &[randn(&[2, 2, 3], 5), randn(&[2, 4, 3], 6)], Mode::Eval, |g, v| g.concat(&[v[0], v[1]], 1));
    check("concat_last", &[randn(&[2, 3], 5), randn(&[2, 1], 6)], Mode::Eval, |g, v| g.concat(&[v[0], v[1], v[0]], 1));
    check("select", &[randn(&[2, 4, 3], 7)], Mode::Eval, |g, v| g.select(v[0], 1, 2));
}

#[test]
fn dense_ops() {
    check("linear", &[randn(&[3, 4], 1), randn(&[4, 5], 2), randn(&[5], 3)], Mode::Eval, |g, v| {
        g.linear(v[0], v[1], Some(v[2]))
    });
    check("linear_batched", &[randn(&[2, 3, 4], 1), randn(&[4, 2], 2)], Mode::Eval, |g, v| g.linear(v[0], v[1], None));
    check("bmm", &[randn(&[2, 3, 4], 4), randn(&[2, 4, 5], 5)], Mode::Eval, |g, v| g.bmm(v[0], v[1], false));
    check("bmm_t", &[randn(&[2, 3, 4], 4), randn(&[2, 5, 4], 5)], Mode::Eval, |g, v| g.bmm(v[0], v[1], true));
    check("conv2d", &[randn(&[2, 3, 5, 5], 6), randn(&[4, 3, 3, 3], 7), randn(&[4], 8)], Mode::Eval, |g, v| {
        g.conv2d(v[0], v[1], Some(v[2]), 2, 1)
    });
    check("conv2d_1x1", &[randn(&[1, 3, 3, 3], 6), randn(&[2, 3, 1, 1], 7)], Mode::Eval, |g, v| {
        g.conv2d(v[0], v[1], None, 1, 0)
    });
    // distinct values so the argmax is stable under perturbation
    let x = Tensor::from_fn(&[1, 2, 5, 5], |i| ((i * 37) % 50) as f64 * 0.1);
    check("maxpool2d", &[x], Mode::Eval, |g, v| g.maxpool2d(v[0], 3, 2, 1));
}

#[test]
fn normalization_and_attention() {
    check("layernorm", &[randn(&[3, 6], 1), randn(&[6], 2), randn(&[6], 3)], Mode::Eval, |g, v| {
        g.layernorm(v[0], v[1], v[2], 1e-5)
    });
    check("softmax", &[randn(&[3, 5], 4)], Mode::Eval, |g, v| g.softmax(v[0], 1));
    check("softmax_axis0", &[randn(&[3, 2, 2], 4)], Mode::Eval, |g, v| g.softmax(v[0], 0));
    check("attention", &[randn(&[2, 3, 4], 5), randn(&[2, 5, 4], 6), randn(&[2, 5, 3], 7)], Mode::Eval, |g, v| {
        g.attention(v[0], v[1], v[2])
    });
    let w = |s| Tensor::randn(&[8, 8], 0.3, &mut ChaCha8Rng::seed_from_u64(s));
    check("mha", &[randn(&[2, 3, 8], 8), w(9), w(10), w(11), w(12)], Mode::Eval, |g, v| {
        g.multi_head_attention(v[0], v[1], v[2], v[3], v[4], 2)
    });
    check("cross_entropy", &[randn(&[4, 3], 13)], Mode::Eval, |g, v| g.cross_entropy(v[0], &[0, 2, 1, 2]));
}

#[test]
fn batchnorm_both_modes() {
    let rm = Tensor::from_f64(&[3], &[0.1, -0.2, 0.3]).unwrap();
    let rv = Tensor::from_f64(&[3], &[0.5, 1.5, 2.0]).unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        let (rm, rv) = (rm.clone(), rv.clone());
        check("batchnorm2d", &[randn(&[2, 3, 2, 2], 1), randn(&[3], 2), randn(&[3], 3)], mode, move |g, v| {
            let st = BatchNormState { running_mean: &rm, running_var: &rv, momentum: 0.1, eps: 1e-5 };
            Ok(g.batchnorm2d(v[0], v[1], v[2], st)?.0)
        });
    }
}

#[test]
fn dropout_with_fixed_mask() {
    check("dropout", &[randn(&[4, 6], 1)], Mode::Train, |g, v| g.dropout(v[0], 0.3));
    check("mlp_block", &[randn(&[2, 4], 1), randn(&[4, 8], 2), randn(&[8], 3), randn(&[8, 4], 4), randn(&[4], 5)], Mode::Train, |g, v| {
        g.mlp_block(v[0], v[1], v[2], v[3], v[4], 0.2)
    });
}

#[test]
fn grads_accumulate_over_reuse() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.leaf(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap(), true);
    let a = g.mul(x, x).unwrap();
    let b = g.add(a, x).unwrap();
    let l = g.sum(b).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[3.0, 5.0]);
}

#[test]
fn backward_contract_errors() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.leaf(Tensor::ones(&[2]), true);
    assert!(g.backward(x).is_err(), "non-scalar loss");
    let c = g.input(Tensor::ones(&[2]));
    let s = g.sum(c).unwrap();
    assert!(g.backward(s).is_err(), "loss detached from every leaf");
    let l = g.sum(x).unwrap();
    g.backward(l).unwrap();
    assert!(g.backward(l).is_err(), "second backward without reset");
    g.reset_grads();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0]);
}

#[test]
fn params_bind_once_and_buffers_stay_constant() {
    let mut p = ModelParams::<f64>::new();
    p.insert_named("w", Tensor::from_f64(&[2], &[1.0, -1.0]).unwrap()).unwrap();
    p.insert_named("bn.running_mean", Tensor::zeros(&[2])).unwrap();
    assert!(!p.entry("bn.running_mean").unwrap().trainable);
    let mut g = Graph::new(Mode::Train, 0);
    let w1 = g.param(&p, "w").unwrap();
    let w2 = g.param(&p, "w").unwrap();
    assert_eq!(w1, w2);
    let m = g.param(&p, "bn.running_mean").unwrap();
    assert!(!g.requires_grad(m));
    assert!(g.param(&p, "missing").is_err());
    let y = g.mul(w1, w2).unwrap();
    let y = g.add(y, m).unwrap();
    let l = g.sum(y).unwrap();
    g.backward(l).unwrap();
    let grads = g.param_grads();
    assert_eq!(grads.len(), 1);
    assert_eq!(grads["w"].data(), &[2.0, -2.0]);
}

#[test]
fn wrong_custom_backward_is_detected() {
    let build = |g: &mut Graph<f64>, v: &[Var]| {
        let value = g.value(v[0]).map(|x| x * x);
        // claims d(x^2)/dx = x
        g.custom("broken_square", &[v[0]], value, Box::new(|inputs, _out, gout| {
            let mut d = gout.clone();
            for (d, x) in d.data_mut().iter_mut().zip(inputs[0].data()) {
                *d *= x;
            }
            vec![Some(d)]
        }))
    };
    let r = check_gradients(build, &[randn(&[5], 1)], Mode::Eval, 0, H).unwrap();
    assert!(r.max_rel_error > 0.1);
}
