//! Welch power spectral density and band power.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::bands::{check_nyquist, validate_bands, BandSpec};
use crate::error::{Result, SignalError};
use crate::segment::{window_samples, EegSegment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams {
    /// Sub-window length in seconds.
    pub window_seconds: f64,
    /// Fraction of a sub-window shared with the next, in `[0, 1)`.
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams { window_seconds: 1.0, overlap: 0.5 }
    }
}

/// One-sided power spectral density, in units^2 / Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
}

impl Psd {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Mean density over the bins of `band`; `None` when no bin falls inside.
    pub fn band_mean(&self, band: &BandSpec) -> Option<f64> {
        let (mut acc, mut n) = (0.0, 0usize);
        for (&f, &p) in self.freqs.iter().zip(&self.density) {
            if band.contains(f) {
                acc += p;
                n += 1;
            }
        }
        (n > 0).then(|| acc / n as f64)
    }
}

/// Periodic Hann window, `0.5 - 0.5 cos(2 pi n / N)`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Reusable Welch estimator for a fixed sub-window length.
pub struct Welch {
    nperseg: usize,
    step: usize,
    sample_rate: f64,
    window: Vec<f64>,
    /// `fs * sum(w^2)`
    scale: f64,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Welch {
    pub fn new(sample_rate: f64, params: WelchParams) -> Result<Self> {
        if !(0.0..1.0).contains(&params.overlap) {
            return Err(SignalError::Config(format!("Welch overlap {} is outside [0, 1)", params.overlap)));
        }
        let nperseg = window_samples(params.window_seconds, sample_rate)?;
        let noverlap = (nperseg as f64 * params.overlap).floor() as usize;
        let step = (nperseg - noverlap).max(1);
        let window = hann(nperseg);
        let scale = sample_rate * window.iter().map(|w| w * w).sum::<f64>();
        let fft = FftPlanner::new().plan_fft_forward(nperseg);
        Ok(Welch { nperseg, step, sample_rate, window, scale, fft })
    }

    pub fn nperseg(&self) -> usize {
        self.nperseg
    }

    /// Averaged modified periodograms with per-window mean removal.
    pub fn psd(&self, x: &[f32]) -> Result<Psd> {
        let n = self.nperseg;
        if x.len() < n {
            return Err(SignalError::InvalidArgument(format!(
                "{} samples is shorter than one {n}-sample Welch window",
                x.len()
            )));
        }
        let n_bins = n / 2 + 1;
        let mut acc = vec![0.0; n_bins];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut count = 0usize;
        let mut start = 0;
        while start + n <= x.len() {
            let seg = &x[start..start + n];
            let mean = seg.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new((v as f64 - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            count += 1;
            start += self.step;
        }
        let nyquist_bin = (n % 2 == 0).then_some(n / 2);
        let density = acc
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
                one_sided * a / (count as f64 * self.scale)
            })
            .collect();
        let freqs = (0..n_bins).map(|k| k as f64 * self.sample_rate / n as f64).collect();
        Ok(Psd { freqs, density })
    }

    /// Band means of one channel, in band order.
    pub fn band_powers(&self, x: &[f32], bands: &[BandSpec]) -> Result<Vec<f64>> {
        let psd = self.psd(x)?;
        bands
            .iter()
            .map(|b| {
                psd.band_mean(b).ok_or_else(|| {
                    SignalError::Config(format!(
                        "{} [{}, {}) Hz contains no frequency bin at {} Hz resolution",
                        b.name,
                        b.lo_hz,
                        b.hi_hz,
                        psd.bin_width()
                    ))
                })
            })
            .collect()
    }
}

/// Per-channel band powers of a segment, `[n_channels][n_bands]`.
pub fn band_psd(segment: &EegSegment<'_>, bands: &[BandSpec], welch: WelchParams) -> Result<Vec<Vec<f64>>> {
    validate_bands(bands)?;
    check_nyquist(bands, segment.sample_rate())?;
    let est = Welch::new(segment.sample_rate(), welch)?;
    (0..segment.n_channels()).map(|c| est.band_powers(segment.channel(c), bands)).collect()
}
