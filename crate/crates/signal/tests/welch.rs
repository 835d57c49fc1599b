//! Welch estimator against a direct DFT periodogram and closed-form values.

use citnet_signal::bands::{bands_from_edges, default_bands, parse_band_edges};
use citnet_signal::welch::hann;
use citnet_signal::{band_psd, segment, EegRecording, Welch, WelchParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FS: f64 = 200.0;

fn tone(freq: f64, n: usize) -> Vec<f32> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / FS).sin() as f32).collect()
}

/// Averaged Hann periodograms by an O(n^2) DFT, one-sided density scaling.
fn dft_welch(x: &[f32], nperseg: usize, step: usize, fs: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..nperseg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / nperseg as f64).cos())
        .collect();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    let bins = nperseg / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut count = 0;
    let mut start = 0;
    while start + nperseg <= x.len() {
        let seg = &x[start..start + nperseg];
        let mean: f64 = seg.iter().map(|&v| v as f64).sum::<f64>() / nperseg as f64;
        for (k, a) in acc.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in seg.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / nperseg as f64;
                let y = (v as f64 - mean) * w[j];
                re += y * ang.cos();
                im += y * ang.sin();
            }
            let one_sided = if k == 0 || (nperseg % 2 == 0 && k == nperseg / 2) { 1.0 } else { 2.0 };
            *a += one_sided * (re * re + im * im) / (fs * s2);
        }
        count += 1;
        start += step;
    }
    acc.iter().map(|a| a / count as f64).collect()
}

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut r)).map(|v: f64| v as f32).collect()
}

#[test]
fn hann_window_is_periodic() {
    let w = hann(4);
    assert_eq!(w[0], 0.0);
    assert!((w[1] - 0.5).abs() < 1e-15 && (w[2] - 1.0).abs() < 1e-15 && (w[3] - 0.5).abs() < 1e-15);
}

#[test]
fn psd_matches_direct_dft() {
    for (seed, n, params) in [
        (1, 800, WelchParams::default()),
        (2, 650, WelchParams::default()),
        (3, 800, WelchParams { window_seconds: 0.5, overlap: 0.25 }),
        (4, 801, WelchParams { window_seconds: 0.505, overlap: 0.0 }),
    ] {
        let x = noise(n, seed);
        let est = Welch::new(FS, params).unwrap();
        let psd = est.psd(&x).unwrap();
        let nperseg = est.nperseg();
        let step = nperseg - (nperseg as f64 * params.overlap).floor() as usize;
        let want = dft_welch(&x, nperseg, step, FS);
        assert_eq!(psd.density.len(), want.len());
        for (a, b) in psd.density.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert!((psd.bin_width() - FS / nperseg as f64).abs() < 1e-12);
    }
}

#[test]
fn psd_matches_frozen_reference_values() {
    // signal and values frozen from an independent Welch implementation
    let x: Vec<f32> = (0..800).map(|i| ((0.37 * i as f64).sin() + (0.1 * i as f64) % 7.0) as f32).collect();
    let psd = Welch::new(FS, WelchParams::default()).unwrap().psd(&x).unwrap();
    let frozen = [
        (0, 0.007272286800109198),
        (1, 0.0016543422669710883),
        (10, 0.01371301868993289),
        (37, 0.01070033485812234),
        (100, 0.0016668231341646518),
    ];
    for (k, v) in frozen {
        assert!((psd.density[k] - v).abs() < 1e-9 * v.max(1e-3), "bin {k}: {}", psd.density[k]);
    }
}

#[test]
fn ten_hz_tone_lands_in_alpha() {
    let rec = EegRecording::new(vec!["OZ".into()], FS, vec![tone(10.0, 800)]).unwrap();
    let seg = segment(&rec, 4.0).unwrap();
    let p = &band_psd(&seg[0], &default_bands(), WelchParams::default()).unwrap()[0];
    let total: f64 = p.iter().sum();
    assert!(p[2] / total >= 0.9, "alpha fraction {}", p[2] / total);
    // unit tone: power 1/2 over a Hann main lobe of 3 bins of 1 Hz, averaged over 6 alpha bins
    assert!((p[2] - 1.0 / 12.0).abs() < 1e-6);
}

#[test]
fn two_hz_tone_maximizes_delta() {
    let rec = EegRecording::new(vec!["OZ".into()], FS, vec![tone(2.0, 800)]).unwrap();
    let seg = segment(&rec, 4.0).unwrap();
    let p = &band_psd(&seg[0], &default_bands(), WelchParams::default()).unwrap()[0];
    assert!(p[1..].iter().all(|&v| p[0] > v));
    assert!((p[0] - 1.0 / 6.0).abs() < 1e-6);
}

#[test]
fn zero_and_constant_signals_have_no_band_power() {
    let rec = EegRecording::new(vec!["A".into(), "B".into()], FS, vec![vec![0.0; 800], vec![3.5; 800]]).unwrap();
    let seg = segment(&rec, 4.0).unwrap();
    let p = band_psd(&seg[0], &default_bands(), WelchParams::default()).unwrap();
    assert!(p[0].iter().all(|&v| v == 0.0));
    assert!(p[1].iter().all(|&v| v.abs() < 1e-20));
}

#[test]
fn white_noise_total_power_matches_variance() {
    for seed in 0..5 {
        let x = noise(4000, seed);
        let psd = Welch::new(FS, WelchParams::default()).unwrap().psd(&x).unwrap();
        let total: f64 = psd.density.iter().sum::<f64>() * psd.bin_width();
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!((total / var - 1.0).abs() < 0.1, "seed {seed}: {total} vs {var}");
    }
}

#[test]
fn band_configuration_errors() {
    let rec = EegRecording::new(vec!["A".into()], 80.0, vec![vec![0.0; 400]]).unwrap();
    let seg = segment(&rec, 4.0).unwrap();
    assert!(band_psd(&seg[0], &default_bands(), WelchParams::default()).is_err(), "gamma above Nyquist");
    assert!(parse_band_edges("1-4,4-8,8-14,14-31").is_err());
    assert!(parse_band_edges("1-4,3-8,8-14,14-31,31-50").is_err(), "overlap");
    assert!(parse_band_edges("0-4,4-8,8-14,14-31,31-50").is_err(), "lo must be positive");
    assert!(parse_band_edges("1-4,4-8,8-14,14-31,31-x").is_err());
    let b = parse_band_edges("1-4, 4-8, 8-13, 13-30, 30-45").unwrap();
    assert_eq!(b[2].hi_hz, 13.0);
    assert!(Welch::new(FS, WelchParams { window_seconds: 1.0, overlap: 1.0 }).is_err());
    let short = Welch::new(FS, WelchParams::default()).unwrap();
    assert!(short.psd(&[0.0; 199]).is_err());
    // resolution too coarse for a 1 Hz wide band
    let narrow = bands_from_edges(&[(1.2, 1.8), (4.0, 8.0), (8.0, 14.0), (14.0, 31.0), (31.0, 50.0)]).unwrap();
    assert!(short.band_powers(&[0.0; 200], &narrow).is_err());
}

#[test]
fn gamma_upper_edge_bin_is_excluded() {
    let psd = Welch::new(FS, WelchParams::default()).unwrap().psd(&noise(400, 9)).unwrap();
    let gamma = default_bands()[4];
    let bins: Vec<f64> = psd.freqs.iter().copied().filter(|&f| gamma.contains(f)).collect();
    assert_eq!(bins.first(), Some(&31.0));
    assert_eq!(bins.last(), Some(&49.0));
}

proptest! {
    #[test]
    fn band_powers_are_non_negative(seed in any::<u64>(), scale in 0.0f32..100.0, offset in -50.0f32..50.0) {
        let x: Vec<f32> = noise(800, seed).iter().map(|v| v * scale + offset).collect();
        let p = Welch::new(FS, WelchParams::default()).unwrap().band_powers(&x, &default_bands()).unwrap();
        prop_assert!(p.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}
