use std::collections::HashSet;

use crate::error::{Result, SignalError};

/// Multichannel raw EEG, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    channel_names: Vec<String>,
    sample_rate: f64,
    n_samples: usize,
    samples: Vec<f32>,
    /// Class id shared by every segment cut from this recording.
    pub label: Option<usize>,
}

impl EegRecording {
    /// `samples` holds `channel_names.len()` rows of equal length.
    pub fn new(channel_names: Vec<String>, sample_rate: f64, samples: Vec<Vec<f32>>) -> Result<Self> {
        if samples.len() != channel_names.len() {
            return Err(SignalError::InvalidArgument(format!(
                "{} channel names but {} sample rows",
                channel_names.len(),
                samples.len()
            )));
        }
        let n_samples = samples.first().map_or(0, Vec::len);
        if let Some((i, row)) = samples.iter().enumerate().find(|(_, r)| r.len() != n_samples) {
            return Err(SignalError::InvalidArgument(format!(
                "channel {i} has {} samples, channel 0 has {n_samples}",
                row.len()
            )));
        }
        Self::from_channel_major(channel_names, sample_rate, n_samples, samples.concat())
    }

    pub fn from_channel_major(
        channel_names: Vec<String>,
        sample_rate: f64,
        n_samples: usize,
        samples: Vec<f32>,
    ) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(SignalError::InvalidArgument(format!("sample rate must be positive, got {sample_rate}")));
        }
        if samples.len() != channel_names.len() * n_samples {
            return Err(SignalError::InvalidArgument(format!(
                "{} values for {} channels x {n_samples} samples",
                samples.len(),
                channel_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &channel_names {
            if !seen.insert(name.as_str()) {
                return Err(SignalError::InvalidArgument(format!("duplicate channel name `{name}`")));
            }
        }
        Ok(EegRecording { channel_names, sample_rate, n_samples, samples, label: None })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn duration_seconds(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        &self.samples[i * self.n_samples..(i + 1) * self.n_samples]
    }

    /// All samples, channel-major.
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }
}
