//! Closed-form values and gradients worked out by hand.

use citnet_tensor::{Adam, AdamConfig, BatchNormState, Gradients, Graph, Mode, ModelParams, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, v).unwrap()
}

#[test]
fn sum_of_squares_gradient_is_twice_x() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.leaf(t(&[4], &[1.0, -2.0, 0.5, 3.0]), true);
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0, 1.0, 6.0]);
}

#[test]
fn expand_gradient_sums_over_copies() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.leaf(t(&[2, 1], &[1.0, 2.0]), true);
    let e = g.expand(x, &[2, 3]).unwrap();
    let w = g.input(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
    let p = g.mul(e, w).unwrap();
    let s = g.sum(p).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[6.0, 15.0]);
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let logits = [0.0, 1.0, 2.0, 1.0, 1.0, 1.0];
    let x = g.leaf(t(&[2, 3], &logits), true);
    let l = g.cross_entropy(x, &[2, 0]).unwrap();
    let z: f64 = 1.0 + 1f64.exp() + 2f64.exp();
    let want_loss = 0.5 * ((z.ln() - 2.0) + 3f64.ln());
    assert!((g.value(l).item() - want_loss).abs() < 1e-12);
    g.backward(l).unwrap();
    let p = [1.0 / z, 1f64.exp() / z, 2f64.exp() / z];
    let want = [p[0] / 2.0, p[1] / 2.0, (p[2] - 1.0) / 2.0, (1.0 / 3.0 - 1.0) / 2.0, 1.0 / 6.0, 1.0 / 6.0];
    for (a, b) in g.grad(x).unwrap().data().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    // frozen from the values above
    assert!((g.value(l).item() - 0.753_109_126_6).abs() < 1e-9);
}

#[test]
fn batchnorm_training_output_is_affine_in_the_standardized_input() {
    let mut g = Graph::<f64>::new(Mode::Train, 0);
    let x = g.input(t(&[2, 1, 1, 2], &[1., 2., 3., 6.]));
    let gamma = g.input(Tensor::full(&[1], 2.0));
    let beta = g.input(Tensor::full(&[1], 3.0));
    let (rm, rv) = (Tensor::zeros(&[1]), Tensor::ones(&[1]));
    let st = BatchNormState { running_mean: &rm, running_var: &rv, momentum: 0.1, eps: 0.0 };
    let (y, _) = g.batchnorm2d(x, gamma, beta, st).unwrap();
    // mean 3, biased variance 3.5
    let s = 3.5f64.sqrt();
    let want = [-2.0, -1.0, 0.0, 3.0].map(|d| 2.0 * d / s + 3.0);
    for (a, b) in g.value(y).data().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn layernorm_zero_gamma_outputs_beta() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.input(Tensor::randn(&[3, 5], 4.0, &mut ChaCha8Rng::seed_from_u64(1)));
    let gamma = g.input(Tensor::zeros(&[5]));
    let beta = g.input(Tensor::full(&[5], 5.0));
    let y = g.layernorm(x, gamma, beta, 1e-5).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 5.0));
}

#[test]
fn mlp_dropout_is_unbiased() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let xt = Tensor::<f64>::randn(&[1, 3], 1.0, &mut r);
    let w1 = Tensor::<f64>::randn(&[3, 6], 0.5, &mut r);
    let b1 = Tensor::<f64>::randn(&[6], 0.5, &mut r);
    let w2 = Tensor::<f64>::randn(&[6, 2], 0.5, &mut r);
    let b2 = Tensor::<f64>::randn(&[2], 0.5, &mut r);
    let run = |mode: Mode, seed: u64| {
        let mut g = Graph::<f64>::new(mode, seed);
        let vars = [&xt, &w1, &b1, &w2, &b2].map(|t| g.input(t.clone()));
        let y = g.mlp_block(vars[0], vars[1], vars[2], vars[3], vars[4], 0.2).unwrap();
        g.value(y).data().to_vec()
    };
    let eval = run(Mode::Eval, 0);
    let trials = 20_000;
    let mut mean = [0.0; 2];
    let mut sq = [0.0; 2];
    for seed in 0..trials {
        for (j, v) in run(Mode::Train, seed).into_iter().enumerate() {
            mean[j] += v / trials as f64;
            sq[j] += v * v / trials as f64;
        }
    }
    for j in 0..2 {
        let se = ((sq[j] - mean[j] * mean[j]) / trials as f64).sqrt();
        assert!((mean[j] - eval[j]).abs() < 5.0 * se, "output {j}: {} vs {} (se {se})", mean[j], eval[j]);
    }
}

#[test]
fn adam_counts_zero_gradient_steps() {
    let mut p = ModelParams::<f64>::new();
    p.insert_named("w", t(&[1], &[3.0])).unwrap();
    let mut grads = Gradients::new();
    grads.insert("w".to_string(), t(&[1], &[0.0]));
    let mut opt = Adam::new(AdamConfig::default());
    opt.step(&mut p, &grads).unwrap();
    opt.step(&mut p, &grads).unwrap();
    assert_eq!(opt.step_count(), 2);
    assert_eq!(p.get("w").unwrap().item(), 3.0);
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(cols in 1usize..8, seed in any::<u64>(), shift in -50.0f64..50.0) {
        let xt = Tensor::<f64>::randn(&[2, cols], 3.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let x = g.input(xt.clone());
        let xs = g.input(xt.map(|v| v + shift));
        let a = g.softmax(x, 1).unwrap();
        let b = g.softmax(xs, 1).unwrap();
        for (p, q) in g.value(a).data().iter().zip(g.value(b).data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
