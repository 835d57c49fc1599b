//! Forward behaviour of elementwise, normalization, reduction and shape ops.

use citnet_tensor::{BatchNormState, Graph, Mode, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Standard normal CDF by composite Simpson integration of the density.
fn phi_simpson(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(0.0) + pdf(x);
    for i in 1..n {
        acc += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + acc * h / 3.0
}

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, v).unwrap()
}

#[test]
fn relu_examples() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.input(t(&[3], &[-1., 0., 2.]));
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0., 0., 2.]);
}

#[test]
fn gelu_matches_integrated_normal_cdf() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let xs = [-3.0, -1.0, -0.25, 0.0, 0.5, 1.0, 2.0, 4.0];
    let x = g.input(t(&[xs.len()], &xs));
    let y = g.gelu(x).unwrap();
    for (&xv, &yv) in xs.iter().zip(g.value(y).data()) {
        assert!((yv - xv * phi_simpson(xv)).abs() < 1e-9, "gelu({xv})");
    }
    // frozen from the oracle above
    assert_eq!(g.value(y).data()[3], 0.0);
    assert!((g.value(y).data()[5] - 0.841_344_746).abs() < 1e-8);
}

#[test]
fn gelu_is_not_the_tanh_approximation() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.input(t(&[1], &[1.5]));
    let y = g.gelu(x).unwrap();
    let tanh_approx = 0.5 * 1.5 * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (1.5 + 0.044715 * 1.5f64.powi(3))).tanh());
    let exact = 1.5 * phi_simpson(1.5);
    assert!((g.value(y).item() - exact).abs() < 1e-10);
    assert!((g.value(y).item() - tanh_approx).abs() > 1e-5);
}

#[test]
fn softmax_examples() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.input(t(&[1, 3], &[0., 0., 0.]));
    let y = g.softmax(x, 1).unwrap();
    for &v in g.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
    let x = g.input(t(&[1, 2], &[1000., 0.]));
    let y = g.softmax(x, 1).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 0.0]);
    assert!(g.value(y).is_finite());
    let x = g.input(t(&[1, 2], &[-1000., -1000.]));
    let y = g.softmax(x, 1).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    assert!(g.softmax(x, 2).is_err());
}

#[test]
fn softmax_along_middle_axis() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let xt = Tensor::<f64>::randn(&[2, 4, 3], 2.0, &mut r);
    let x = g.input(xt.clone());
    let y = g.softmax(x, 1).unwrap();
    for b in 0..2 {
        for k in 0..3 {
            let idx = |i: usize| (b * 4 + i) * 3 + k;
            let z: f64 = (0..4).map(|i| xt.data()[idx(i)].exp()).sum();
            for i in 0..4 {
                assert!((g.value(y).data()[idx(i)] - xt.data()[idx(i)].exp() / z).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn layernorm_examples() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.input(t(&[1, 3], &[1., 2., 3.]));
    let ones = g.input(Tensor::ones(&[3]));
    let zeros = g.input(Tensor::zeros(&[3]));
    let y = g.layernorm(x, ones, zeros, 1e-5).unwrap();
    // (x - 2) / sqrt(2/3 + 1e-5)
    let s = (2.0f64 / 3.0 + 1e-5).sqrt();
    let want = [-1.0 / s, 0.0, 1.0 / s];
    for (a, b) in g.value(y).data().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((want[2] - 1.224_735).abs() < 1e-5);

    let x = g.input(Tensor::full(&[2, 4], 7.0));
    let y = g.layernorm(x, ones, zeros, 1e-5).unwrap_err();
    let _ = y; // gamma extent mismatch
    let o4 = g.input(Tensor::ones(&[4]));
    let b4 = g.input(Tensor::full(&[4], 0.25));
    let y = g.layernorm(x, o4, b4, 1e-5).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.25), "constant rows map to beta");
}

#[test]
fn batchnorm_train_and_eval() {
    let mut g = Graph::<f64>::new(Mode::Train, 0);
    let x = g.input(t(&[2, 1, 1, 1], &[1., 3.]));
    let gamma = g.input(Tensor::ones(&[1]));
    let beta = g.input(Tensor::zeros(&[1]));
    let rm = Tensor::zeros(&[1]);
    let rv = Tensor::ones(&[1]);
    let st = BatchNormState { running_mean: &rm, running_var: &rv, momentum: 0.1, eps: 1e-5 };
    let (y, stats) = g.batchnorm2d(x, gamma, beta, st).unwrap();
    let d = (1.0f64 + 1e-5).sqrt();
    assert!((g.value(y).data()[0] + 1.0 / d).abs() < 1e-12);
    assert!((g.value(y).data()[1] - 1.0 / d).abs() < 1e-12);
    let stats = stats.unwrap();
    // mean 2, unbiased var 2
    assert!((stats.mean.item() - 0.2).abs() < 1e-12);
    assert!((stats.var.item() - (0.9 + 0.1 * 2.0)).abs() < 1e-12);

    let mut ge = Graph::<f64>::new(Mode::Eval, 0);
    let x = ge.input(t(&[1, 1, 1, 2], &[5., 7.]));
    let gamma = ge.input(Tensor::full(&[1], 2.0));
    let beta = ge.input(Tensor::full(&[1], 1.0));
    let rm = Tensor::full(&[1], 5.0);
    let rv = Tensor::full(&[1], 4.0);
    let st = BatchNormState { running_mean: &rm, running_var: &rv, momentum: 0.1, eps: 0.0 };
    let (y, stats) = ge.batchnorm2d(x, gamma, beta, st).unwrap();
    assert!(stats.is_none());
    assert_eq!(ge.value(y).data(), &[1.0, 3.0]);
}

#[test]
fn batchnorm_single_value_per_channel_rejected_in_training() {
    let mut g = Graph::<f64>::new(Mode::Train, 0);
    let x = g.input(Tensor::zeros(&[1, 2, 1, 1]));
    let gamma = g.input(Tensor::ones(&[2]));
    let beta = g.input(Tensor::zeros(&[2]));
    let (rm, rv) = (Tensor::zeros(&[2]), Tensor::ones(&[2]));
    let st = BatchNormState { running_mean: &rm, running_var: &rv, momentum: 0.1, eps: 1e-5 };
    assert!(g.batchnorm2d(x, gamma, beta, st).is_err());
}

#[test]
fn cross_entropy_examples() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.input(Tensor::zeros(&[1, 3]));
    let l = g.cross_entropy(x, &[0]).unwrap();
    assert!((g.value(l).item() - 3f64.ln()).abs() < 1e-12);
    let x = g.input(t(&[1, 3], &[100., 0., 0.]));
    let l = g.cross_entropy(x, &[0]).unwrap();
    assert!(g.value(l).item().abs() < 1e-12);
    let x = g.input(t(&[2, 2], &[0., 1000., 1000., 0.]));
    let l = g.cross_entropy(x, &[0, 0]).unwrap();
    assert!((g.value(l).item() - 500.0).abs() < 1e-9, "mean of 1000 and 0");
    assert!(g.cross_entropy(x, &[2, 0]).is_err(), "label out of range");
    assert!(g.cross_entropy(x, &[0]).is_err(), "label count");
}

#[test]
fn dropout_modes() {
    let mut ge = Graph::<f64>::new(Mode::Eval, 7);
    let x = ge.input(Tensor::ones(&[100]));
    let y = ge.dropout(x, 0.5).unwrap();
    assert_eq!(ge.value(y), ge.value(x));

    let mut gt = Graph::<f64>::new(Mode::Train, 7);
    let x = gt.input(Tensor::ones(&[1000]));
    let y = gt.dropout(x, 0.0).unwrap();
    assert_eq!(gt.value(y), gt.value(x));
    let y = gt.dropout(x, 0.2).unwrap();
    let vals = gt.value(y).data();
    assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
    let kept = vals.iter().filter(|&&v| v != 0.0).count();
    assert!((700..900).contains(&kept), "kept {kept}");
    assert!(gt.dropout(x, 1.0).is_err());
    assert!(gt.dropout(x, -0.1).is_err());

    let mut again = Graph::<f64>::new(Mode::Train, 7);
    let x2 = again.input(Tensor::ones(&[1000]));
    let _ = again.dropout(x2, 0.0).unwrap();
    let y2 = again.dropout(x2, 0.2).unwrap();
    assert_eq!(again.value(y2), gt.value(y), "masks follow the graph seed");
}

#[test]
fn shape_ops() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let x = g.input(Tensor::from_fn(&[2, 3], |i| i as f64));
    let p = g.permute(x, &[1, 0]).unwrap();
    assert_eq!(g.value(p).data(), &[0., 3., 1., 4., 2., 5.]);
    let r = g.reshape(x, &[3, 2]).unwrap();
    assert_eq!(g.value(r).data(), g.value(x).data());
    assert!(g.reshape(x, &[4, 2]).is_err());
    let u = g.unsqueeze(x, 1).unwrap();
    assert_eq!(g.shape(u), &[2, 1, 3]);
    let e = g.expand(u, &[2, 2, 3]).unwrap();
    assert_eq!(g.value(e).data(), &[0., 1., 2., 0., 1., 2., 3., 4., 5., 3., 4., 5.]);
    assert!(g.expand(x, &[4, 3]).is_err(), "only unit axes broadcast");
    let s = g.squeeze(u, 1).unwrap();
    assert_eq!(g.shape(s), &[2, 3]);
    assert!(g.squeeze(x, 0).is_err());
    let c = g.concat(&[x, x], 1).unwrap();
    assert_eq!(g.value(c).data(), &[0., 1., 2., 0., 1., 2., 3., 4., 5., 3., 4., 5.]);
    let c0 = g.concat(&[x, r], 0);
    assert!(c0.is_err(), "trailing extents differ");
    let sel = g.select(x, 1, 2).unwrap();
    assert_eq!(g.value(sel).data(), &[2., 5.]);
    assert!(g.select(x, 1, 3).is_err());
    let m = g.mean_axis(x, 0).unwrap();
    assert_eq!(g.value(m).data(), &[1.5, 2.5, 3.5]);
    assert!(g.permute(x, &[0, 0]).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, cols in 1usize..9, seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let xt = Tensor::<f64>::randn(&[rows, cols], scale, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = g.input(xt);
        let y = g.softmax(x, 1).unwrap();
        for r in 0..rows {
            let s: f64 = g.value(y).data()[r * cols..(r + 1) * cols].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn layernorm_unit_affine_moments(rows in 1usize..4, d in 2usize..32, seed in any::<u64>(), scale in 0.5f64..10.0) {
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let xt = Tensor::<f64>::randn(&[rows, d], scale, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = g.input(xt.clone());
        let o = g.input(Tensor::ones(&[d]));
        let z = g.input(Tensor::zeros(&[d]));
        let y = g.layernorm(x, o, z, 1e-5).unwrap();
        for r in 0..rows {
            let row = &g.value(y).data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let src = &xt.data()[r * d..(r + 1) * d];
            let sm = src.iter().sum::<f64>() / d as f64;
            let sv = src.iter().map(|v| (v - sm).powi(2)).sum::<f64>() / d as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - sv / (sv + 1e-5)).abs() < 1e-9);
        }
    }

    #[test]
    fn permute_then_inverse_is_identity(a in 1usize..4, b in 1usize..4, c in 1usize..4, seed in any::<u64>()) {
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let xt = Tensor::<f64>::randn(&[a, b, c], 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = g.input(xt.clone());
        let p = g.permute(x, &[2, 0, 1]).unwrap();
        prop_assert_eq!(g.shape(p), &[c, a, b][..]);
        let back = g.permute(p, &[1, 2, 0]).unwrap();
        prop_assert_eq!(g.value(back), &xt);
    }

    #[test]
    fn concat_then_select_recovers_parts(n in 1usize..3, l1 in 1usize..4, l2 in 1usize..4, d in 1usize..5, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let at = Tensor::<f64>::randn(&[n, l1, d], 1.0, &mut r);
        let bt = Tensor::<f64>::randn(&[n, l2, d], 1.0, &mut r);
        let (a, b) = (g.input(at), g.input(bt));
        let c = g.concat(&[a, b], 1).unwrap();
        prop_assert_eq!(g.shape(c), &[n, l1 + l2, d][..]);
        for i in 0..l2 {
            let from_c = g.select(c, 1, l1 + i).unwrap();
            let from_b = g.select(b, 1, i).unwrap();
            prop_assert_eq!(g.value(from_c), g.value(from_b));
        }
    }

    #[test]
    fn expand_broadcasts_without_change(n in 1usize..3, c in 1usize..4, h in 1usize..4, w in 1usize..4, seed in any::<u64>()) {
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let xt = Tensor::<f64>::randn(&[n, c, 1, 1], 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = g.input(xt.clone());
        let e = g.expand(x, &[n, c, h, w]).unwrap();
        for (i, &v) in g.value(e).data().iter().enumerate() {
            prop_assert_eq!(v, xt.data()[i / (h * w)]);
        }
    }
}
