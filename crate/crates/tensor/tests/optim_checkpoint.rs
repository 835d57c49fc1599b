use citnet_tensor::checkpoint::{decode, encode, load, save};
use citnet_tensor::{Adam, AdamConfig, Gradients, ModelParams, Tensor};
use proptest::prelude::*;

fn scalar_params(v: f64) -> ModelParams<f64> {
    let mut p = ModelParams::new();
    p.insert_named("w", Tensor::from_f64(&[1], &[v]).unwrap()).unwrap();
    p
}

fn grad(v: f64) -> Gradients<f64> {
    let mut g = Gradients::new();
    g.insert("w".to_string(), Tensor::from_f64(&[1], &[v]).unwrap());
    g
}

#[test]
fn adam_two_step_trace() {
    let mut p = scalar_params(1.0);
    let mut opt = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() });
    opt.step(&mut p, &grad(0.5)).unwrap();
    assert!((p.get("w").unwrap().item() - 0.900_000_002).abs() < 1e-10);
    opt.step(&mut p, &grad(-0.25)).unwrap();
    assert!((p.get("w").unwrap().item() - 0.873_366_298_707_846_3).abs() < 1e-10);
    assert_eq!(opt.step_count(), 2);
    let (m, v) = opt.moments("w").unwrap();
    assert!((m[0] - (0.9 * 0.05 + 0.1 * -0.25)).abs() < 1e-15);
    assert!((v[0] - (0.999 * 0.001 * 0.25 + 0.001 * 0.0625)).abs() < 1e-15);
}

#[test]
fn adam_first_step_is_normalized_sign() {
    for g in [1e-3, 2.0, -7.5] {
        let mut p = scalar_params(0.0);
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut p, &grad(g)).unwrap();
        let want = -1e-5 * g / (g.abs() + 1e-8);
        assert!((p.get("w").unwrap().item() - want).abs() < 1e-15);
    }
}

#[test]
fn adam_zero_grad_leaves_params_and_skips_missing() {
    let mut p = scalar_params(3.0);
    p.insert_named("frozen", Tensor::ones(&[2])).unwrap();
    let mut opt = Adam::new(AdamConfig::default());
    opt.step(&mut p, &grad(0.0)).unwrap();
    assert_eq!(p.get("w").unwrap().item(), 3.0);
    assert_eq!(p.get("frozen").unwrap().data(), &[1.0, 1.0]);
    assert!(opt.moments("frozen").is_none());
}

#[test]
fn adam_rejects_mismatched_gradient_before_touching_anything() {
    let mut p = scalar_params(3.0);
    p.insert_named("b", Tensor::ones(&[2])).unwrap();
    let mut g = grad(1.0);
    g.insert("b".into(), Tensor::ones(&[3]));
    let mut opt = Adam::new(AdamConfig::default());
    assert!(opt.step(&mut p, &g).is_err());
    assert_eq!(p.get("w").unwrap().item(), 3.0);
    assert_eq!(opt.step_count(), 0);
}

fn sample_params() -> ModelParams<f32> {
    let mut p = ModelParams::new();
    p.insert_named("cnn.stem.conv.weight", Tensor::from_fn(&[2, 1, 3, 3], |i| i as f32 * 0.37 - 1.0)).unwrap();
    p.insert_named("cnn.stem.bn.running_var", Tensor::from_fn(&[2], |i| 1.0 + i as f32)).unwrap();
    p.insert_named("head.fc.bias", Tensor::from_fn(&[3], |i| -(i as f32))).unwrap();
    p.insert_named("scalar", Tensor::scalar(f32::MIN_POSITIVE)).unwrap();
    p
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let p = sample_params();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save(&p, &path).unwrap();
    let q: ModelParams<f32> = load(&path).unwrap();
    assert_eq!(p.names().collect::<Vec<_>>(), q.names().collect::<Vec<_>>());
    for (name, e) in p.iter() {
        let f = q.entry(name).unwrap();
        assert_eq!(e.tensor.shape(), f.tensor.shape());
        assert_eq!(e.trainable, f.trainable);
        let a: Vec<u32> = e.tensor.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = f.tensor.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "{name}");
    }
    assert_eq!(std::fs::read(&path).unwrap(), encode(&q).unwrap());
    assert!(!dir.path().join("m.ckpt.tmp").exists());
}

#[test]
fn checkpoint_corruption_is_rejected() {
    let bytes = encode(&sample_params()).unwrap();
    for cut in [0, 5, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode::<f32>(&bytes[..cut]).is_err(), "truncated at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode::<f32>(&bad).is_err());
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(decode::<f32>(&bad).is_err(), "version");
    let mut longer = bytes[..bytes.len() - 8].to_vec();
    longer.push(0);
    longer.extend_from_slice(&(longer.len() as u64).to_le_bytes());
    assert!(decode::<f32>(&longer).is_err(), "trailing bytes");
}

#[test]
fn params_store_contract() {
    let mut p = sample_params();
    assert!(p.insert_named("head.fc.bias", Tensor::zeros(&[3])).is_err());
    assert!(p.set("head.fc.bias", Tensor::zeros(&[4])).is_err());
    p.set("head.fc.bias", Tensor::zeros(&[3])).unwrap();
    assert!(p.get("nope").is_err());
    assert_eq!(p.num_trainable(), 2 * 9 + 3 + 1);
}

proptest! {
    #[test]
    fn checkpoint_round_trips_arbitrary_tensors(
        entries in prop::collection::vec((prop::collection::vec(0usize..4, 0..4), any::<u64>()), 1..6),
    ) {
        let mut p = ModelParams::<f32>::new();
        for (i, (shape, seed)) in entries.iter().enumerate() {
            let t = Tensor::from_fn(shape, |j| f32::from_bits((seed.wrapping_mul(j as u64 + 1) >> 33) as u32 & 0x7f7f_ffff));
            p.insert_named(format!("p{i}.θ"), t).unwrap();
        }
        let q: ModelParams<f32> = decode(&encode(&p).unwrap()).unwrap();
        prop_assert_eq!(encode(&p).unwrap(), encode(&q).unwrap());
    }
}
