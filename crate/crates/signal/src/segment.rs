use crate::error::{Result, SignalError};
use crate::recording::EegRecording;

/// A full-length, non-overlapping window of a recording.
#[derive(Debug, Clone, Copy)]
pub struct EegSegment<'a> {
    pub recording: &'a EegRecording,
    pub start_sample: usize,
    pub length_samples: usize,
    pub label: Option<usize>,
}

impl<'a> EegSegment<'a> {
    pub fn channel(&self, i: usize) -> &'a [f32] {
        &self.recording.channel(i)[self.start_sample..self.start_sample + self.length_samples]
    }

    pub fn n_channels(&self) -> usize {
        self.recording.n_channels()
    }

    pub fn sample_rate(&self) -> f64 {
        self.recording.sample_rate()
    }
}

/// Samples per window, `round(window_seconds * sample_rate)`.
pub fn window_samples(window_seconds: f64, sample_rate: f64) -> Result<usize> {
    if !(window_seconds > 0.0 && window_seconds.is_finite()) {
        return Err(SignalError::InvalidArgument(format!("window must be positive, got {window_seconds} s")));
    }
    let n = (window_seconds * sample_rate).round();
    if n < 1.0 {
        return Err(SignalError::InvalidArgument(format!(
            "window of {window_seconds} s is shorter than one sample at {sample_rate} Hz"
        )));
    }
    Ok(n as usize)
}

/// Back-to-back windows from sample 0; the trailing remainder is dropped.
pub fn segment(recording: &EegRecording, window_seconds: f64) -> Result<Vec<EegSegment<'_>>> {
    let len = window_samples(window_seconds, recording.sample_rate())?;
    let count = recording.n_samples() / len;
    Ok((0..count)
        .map(|i| EegSegment { recording, start_sample: i * len, length_samples: len, label: recording.label })
        .collect())
}
