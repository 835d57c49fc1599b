//! Transformer branch and interaction blocks.

use citnet_model::network::{init_params, Ctx, ModelSpec};
use citnet_model::vit::{encoder_block, EncoderVars};
use citnet_model::{cit, vit, CitMode, ExperimentConfig, Variant};
use citnet_tensor::{Graph, Mode, ModelParams, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn vit_spec() -> ModelSpec {
    ModelSpec::from_config(&ExperimentConfig { variant: Variant::TransformerOnly, ..Default::default() }).unwrap()
}

fn zero_all(params: &mut ModelParams<f64>, prefix: &str) {
    let names: Vec<String> = params.names().filter(|n| n.starts_with(prefix)).map(String::from).collect();
    for n in names {
        params.get_mut(&n).unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
}

#[test]
fn patch_embed_zero_input_gives_zero_tokens() {
    let spec = vit_spec();
    let mut params = init_params::<f64>(&spec, 0).unwrap();
    zero_all(&mut params, "vit.embed.pos");
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let mut cx = Ctx::new(&mut g, &params);
    let x = cx.g.input(Tensor::zeros(&[2, 5, 32, 32]));
    let t = vit::embed(&mut cx, &spec, x).unwrap();
    assert_eq!(cx.g.shape(t), [2, 5, 256]);
    assert!(cx.g.value(t).data().iter().all(|&v| v == 0.0));
}

#[test]
fn one_hot_projection_picks_a_pixel() {
    let spec = vit_spec();
    let mut params = init_params::<f64>(&spec, 0).unwrap();
    zero_all(&mut params, "vit.embed");
    let (j, r) = (37 * 32 % 1024 + 5, 17);
    params.get_mut("vit.embed.proj.weight").unwrap().data_mut()[j * 256 + r] = 1.0;
    let xt = randn(&[2, 5, 32, 32], 1);
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let mut cx = Ctx::new(&mut g, &params);
    let x = cx.g.input(xt.clone());
    let t = vit::embed(&mut cx, &spec, x).unwrap();
    let tv = cx.g.value(t);
    for n in 0..2 {
        for p in 0..5 {
            assert_eq!(tv.data()[(n * 5 + p) * 256 + r], xt.data()[(n * 5 + p) * 1024 + j]);
        }
    }
}

/// Binds a full set of encoder parameters as graph leaves.
fn encoder_leaves(g: &mut Graph<f64>, d: usize, hidden: usize, seed: u64, zero_branches: bool) -> EncoderVars {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = |shape: &[usize], std: f64, zero: bool| {
        let t = if zero { Tensor::zeros(shape) } else { Tensor::randn(shape, std, &mut rng) };
        g.leaf(t, true)
    };
    EncoderVars {
        ln1_gamma: w(&[d], 1.0, false),
        ln1_beta: w(&[d], 1.0, false),
        wq: w(&[d, d], 0.3, zero_branches),
        wk: w(&[d, d], 0.3, zero_branches),
        wv: w(&[d, d], 0.3, zero_branches),
        wo: w(&[d, d], 0.3, zero_branches),
        ln2_gamma: w(&[d], 1.0, false),
        ln2_beta: w(&[d], 1.0, false),
        fc1_weight: w(&[d, hidden], 0.3, zero_branches),
        fc1_bias: w(&[hidden], 1.0, zero_branches),
        fc2_weight: w(&[hidden, d], 0.3, zero_branches),
        fc2_bias: w(&[d], 1.0, zero_branches),
    }
}

#[test]
fn encoder_with_zero_branches_is_the_identity() {
    for mode in [Mode::Eval, Mode::Train] {
        let mut g = Graph::<f64>::new(mode, 3);
        let p = encoder_leaves(&mut g, 16, 64, 1, true);
        let xt = randn(&[2, 7, 16], 2);
        let x = g.input(xt.clone());
        let y = encoder_block(&mut g, x, &p, 4, 0.2).unwrap();
        assert_eq!(g.value(y).data(), xt.data());
    }
}

#[test]
fn encoder_matches_a_step_by_step_composition() {
    let (n, l, d, h) = (2, 5, 16, 4);
    let dh = d / h;
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let p = encoder_leaves(&mut g, d, 4 * d, 7, false);
    let x = g.input(randn(&[n, l, d], 8));
    let y = encoder_block(&mut g, x, &p, h, 0.2).unwrap();

    // Reference: explicit heads from column slices of the projections.
    let cols = |g: &mut Graph<f64>, w: Var, lo: usize| {
        let wt = g.value(w).clone();
        let t = Tensor::from_fn(&[d, dh], |i| wt.data()[(i / dh) * d + lo + i % dh]);
        g.input(t)
    };
    let a = g.layernorm(x, p.ln1_gamma, p.ln1_beta, 1e-5).unwrap();
    let mut heads = Vec::new();
    for i in 0..h {
        let (wq, wk, wv) = (cols(&mut g, p.wq, i * dh), cols(&mut g, p.wk, i * dh), cols(&mut g, p.wv, i * dh));
        let q = g.linear(a, wq, None).unwrap();
        let k = g.linear(a, wk, None).unwrap();
        let v = g.linear(a, wv, None).unwrap();
        heads.push(g.attention(q, k, v).unwrap());
    }
    let cat = g.concat(&heads, 2).unwrap();
    let mha = g.linear(cat, p.wo, None).unwrap();
    let y1 = g.add(x, mha).unwrap();
    let m = g.layernorm(y1, p.ln2_gamma, p.ln2_beta, 1e-5).unwrap();
    let m = g.linear(m, p.fc1_weight, Some(p.fc1_bias)).unwrap();
    let m = g.gelu(m).unwrap();
    let m = g.linear(m, p.fc2_weight, Some(p.fc2_bias)).unwrap();
    let reference = g.add(y1, m).unwrap();
    assert!(g.value(y).max_abs_diff(g.value(reference)) < 1e-6);
}

#[test]
fn encoder_is_permutation_equivariant() {
    let perm = [3, 0, 4, 1, 2];
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let p = encoder_leaves(&mut g, 8, 32, 9, false);
    let xt = randn(&[1, 5, 8], 10);
    let xp = Tensor::from_fn(&[1, 5, 8], |i| xt.data()[perm[i / 8] * 8 + i % 8]);
    let x = g.input(xt);
    let x2 = g.input(xp);
    let y = encoder_block(&mut g, x, &p, 2, 0.0).unwrap();
    let y2 = encoder_block(&mut g, x2, &p, 2, 0.0).unwrap();
    let (yv, y2v) = (g.value(y).clone(), g.value(y2).clone());
    for t in 0..5 {
        for c in 0..8 {
            assert!((y2v.data()[t * 8 + c] - yv.data()[perm[t] * 8 + c]).abs() < 1e-12);
        }
    }
}

#[test]
fn transformer_stage_shapes_and_attention_rows() {
    let spec = vit_spec();
    let params = init_params::<f32>(&spec, 0).unwrap();
    let mut g = Graph::<f32>::new(Mode::Eval, 0);
    g.enable_attention_probe();
    let mut cx = Ctx::new(&mut g, &params);
    let x = cx.g.input(Tensor::randn(&[2, 5, 32, 32], 1.0, &mut ChaCha8Rng::seed_from_u64(3)));
    let t0 = vit::embed(&mut cx, &spec, x).unwrap();
    let t1 = vit::stage(&mut cx, &spec, 1, t0).unwrap();
    assert_eq!(cx.g.shape(t1), [2, 5, 256]);
    let wide = cx.g.input(Tensor::randn(&[2, 40, 256], 1.0, &mut ChaCha8Rng::seed_from_u64(4)));
    let t4 = vit::stage(&mut cx, &spec, 4, wide).unwrap();
    assert_eq!(cx.g.shape(t4), [2, 40, 256]);
    let probes = g.take_attention_probe();
    assert_eq!(probes.len(), 6, "one probe per block, heads batched");
    for p in probes {
        assert_eq!(p.shape()[0], 2 * 4);
        let l = *p.shape().last().unwrap();
        for row in p.data().chunks(l) {
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn transformer_stage_is_deterministic_in_inference() {
    let spec = vit_spec();
    let params = init_params::<f32>(&spec, 0).unwrap();
    let run = || {
        let mut g = Graph::<f32>::new(Mode::Eval, 0);
        let mut cx = Ctx::new(&mut g, &params);
        let x = cx.g.input(Tensor::randn(&[2, 5, 32, 32], 1.0, &mut ChaCha8Rng::seed_from_u64(5)));
        let t = vit::embed(&mut cx, &spec, x).unwrap();
        let t = vit::stage(&mut cx, &spec, 2, t).unwrap();
        cx.g.value(t).clone()
    };
    assert_eq!(run().data(), run().data());
}

#[test]
fn l2g_shapes_and_modes() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let fl = g.input(randn(&[2, 64, 9, 9], 1));
    let fg = g.input(randn(&[2, 5, 256], 2));
    let w = g.input(randn(&[64, 256], 3));
    let b = g.input(randn(&[256], 4));
    let double = cit::l2g(&mut g, fl, fg, w, b, CitMode::Double, true).unwrap();
    assert_eq!(g.shape(double), [2, 10, 256]);
    let single = cit::l2g(&mut g, fl, fg, w, b, CitMode::SingleToken, true).unwrap();
    assert_eq!(g.shape(single), [2, 6, 256]);
    let replaced = cit::l2g(&mut g, fl, fg, w, b, CitMode::Double, false).unwrap();
    assert_eq!(g.shape(replaced), [2, 5, 256]);
    // The injected tokens are copies of one vector per sample.
    let v = g.value(double).data().to_vec();
    for n in 0..2 {
        for t in 1..5 {
            assert_eq!(v[(n * 10 + t) * 256..(n * 10 + t + 1) * 256], v[n * 10 * 256..(n * 10 + 1) * 256]);
        }
    }
}

#[test]
fn l2g_of_a_constant_map_with_identity_weights() {
    let (c, d, cval) = (3, 5, 2.5);
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let fl = g.input(Tensor::full(&[1, c, 4, 4], cval));
    let fg = g.input(randn(&[1, 2, d], 1));
    let w = g.input(Tensor::from_fn(&[c, d], |i| if i / d == i % d { 1.0 } else { 0.0 }));
    let b = g.input(Tensor::zeros(&[d]));
    let y = cit::l2g(&mut g, fl, fg, w, b, CitMode::Double, true).unwrap();
    let v = g.value(y).data();
    for t in 0..2 {
        assert_eq!(&v[t * d..(t + 1) * d], &[cval, cval, cval, 0.0, 0.0]);
    }
}

#[test]
fn g2l_shapes_and_zero_conv() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let fg = g.input(randn(&[2, 10, 256], 1));
    let fl = g.input(randn(&[2, 64, 9, 9], 2));
    let cat = cit::g2l_concat(&mut g, fg, fl, true).unwrap();
    assert_eq!(g.shape(cat), [2, 320, 9, 9]);
    let w = g.input(Tensor::zeros(&[64, 320, 1, 1]));
    let b = g.input(Tensor::zeros(&[64]));
    let y = cit::g2l(&mut g, fg, fl, w, b, true).unwrap();
    assert_eq!(g.shape(y), [2, 64, 9, 9]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    let no_cfm = cit::g2l_concat(&mut g, fg, fl, false).unwrap();
    assert_eq!(g.shape(no_cfm), [2, 256, 9, 9]);
}

#[test]
fn g2l_concat_keeps_local_channels_first() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let flt = randn(&[1, 3, 2, 2], 1);
    let fg = g.input(randn(&[1, 4, 5], 2));
    let fl = g.input(flt.clone());
    let cat = cit::g2l_concat(&mut g, fg, fl, true).unwrap();
    assert_eq!(&g.value(cat).data()[..12], flt.data());
}

#[test]
fn g2l_selecting_global_channels_broadcasts_the_first_token() {
    let (c, d) = (3, 5);
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let fgt = randn(&[2, 4, d], 1);
    let fg = g.input(fgt.clone());
    let fl = g.input(randn(&[2, c, 3, 3], 2));
    // Output channel o copies global channel o.
    let w = g.input(Tensor::from_fn(&[c, c + d, 1, 1], |i| if i % (c + d) == c + i / (c + d) { 1.0 } else { 0.0 }));
    let b = g.input(Tensor::zeros(&[c]));
    let y = cit::g2l(&mut g, fg, fl, w, b, true).unwrap();
    let v = g.value(y).data();
    for n in 0..2 {
        for o in 0..c {
            let want = fgt.data()[n * 4 * d + o];
            assert!(v[(n * c + o) * 9..(n * c + o + 1) * 9].iter().all(|&x| x == want));
        }
    }
}

#[test]
fn zero_parameter_cit_and_evaluation_order() {
    let mut g = Graph::<f64>::new(Mode::Eval, 0);
    let fgt = randn(&[2, 5, 8], 1);
    let fl = g.input(randn(&[2, 4, 3, 3], 2));
    let fg = g.input(fgt.clone());
    let wl = g.input(Tensor::zeros(&[4, 8]));
    let bl = g.input(Tensor::zeros(&[8]));
    let wg = g.input(Tensor::zeros(&[4, 12, 1, 1]));
    let bg = g.input(Tensor::zeros(&[4]));
    let t_next = cit::l2g(&mut g, fl, fg, wl, bl, CitMode::Double, true).unwrap();
    let c_next = cit::g2l(&mut g, fg, fl, wg, bg, true).unwrap();
    assert!(g.value(c_next).data().iter().all(|&v| v == 0.0));
    let tv = g.value(t_next).data();
    for n in 0..2 {
        assert!(tv[n * 80..n * 80 + 40].iter().all(|&v| v == 0.0));
        assert_eq!(&tv[n * 80 + 40..n * 80 + 80], &fgt.data()[n * 40..(n + 1) * 40]);
    }

    // Same inputs, opposite order, random weights.
    let ws = [randn(&[4, 8], 3), randn(&[8], 4), randn(&[4, 12, 1, 1], 5), randn(&[4], 6)];
    let run = |g2l_first: bool| {
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let fl = g.input(randn(&[2, 4, 3, 3], 2));
        let fg = g.input(fgt.clone());
        let v: Vec<Var> = ws.iter().map(|t| g.input(t.clone())).collect();
        let (c, t) = if g2l_first {
            let c = cit::g2l(&mut g, fg, fl, v[2], v[3], true).unwrap();
            (c, cit::l2g(&mut g, fl, fg, v[0], v[1], CitMode::Double, true).unwrap())
        } else {
            let t = cit::l2g(&mut g, fl, fg, v[0], v[1], CitMode::Double, true).unwrap();
            (cit::g2l(&mut g, fg, fl, v[2], v[3], true).unwrap(), t)
        };
        (g.value(c).clone(), g.value(t).clone())
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn full_model_cit_stage_one_trace() {
    let cfg = ExperimentConfig::default();
    let spec = ModelSpec::from_config(&cfg).unwrap();
    let r = citnet_model::shape_audit(&spec, 2).unwrap();
    let at = |l: &str| r.actual.iter().find(|e| e.label == l).unwrap().shape.clone();
    assert_eq!((at("C1"), at("T1")), (vec![2, 64, 9, 9], vec![2, 5, 256]));
    assert_eq!((at("cit1.g2l"), at("cit1.l2g")), (vec![2, 64, 9, 9], vec![2, 10, 256]));
}
