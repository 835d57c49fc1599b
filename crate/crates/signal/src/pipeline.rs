use crate::bands::{check_nyquist, default_bands, validate_bands, BandSpec};
use crate::error::{Result, SignalError};
use crate::grid::{spatial_map, SpatialFrequencyGrid};
use crate::layout::ElectrodeLayout;
use crate::recording::EegRecording;
use crate::segment::segment;
use crate::welch::{Welch, WelchParams};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub window_seconds: f64,
    pub bands: Vec<BandSpec>,
    pub welch: WelchParams,
    pub layout: ElectrodeLayout,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_seconds: 4.0,
            bands: default_bands(),
            welch: WelchParams::default(),
            layout: ElectrodeLayout::seed62(),
        }
    }
}

/// One grid per segment, in recording order.
pub fn build_representation(recording: &EegRecording, cfg: &FeatureConfig) -> Result<Vec<SpatialFrequencyGrid>> {
    validate_bands(&cfg.bands)?;
    check_nyquist(&cfg.bands, recording.sample_rate())?;
    cfg.layout.check_covers(recording.channel_names().iter().map(String::as_str))?;
    let segments = segment(recording, cfg.window_seconds)?;
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let welch = Welch::new(recording.sample_rate(), cfg.welch)?;
    segments
        .iter()
        .enumerate()
        .map(|(index, seg)| {
            let wrap = |e: SignalError| SignalError::Segment { index, source: Box::new(e) };
            let features = (0..seg.n_channels())
                .map(|c| welch.band_powers(seg.channel(c), &cfg.bands))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            let mut grid = spatial_map(&features, recording.channel_names(), &cfg.layout).map_err(wrap)?;
            grid.label = seg.label;
            Ok(grid)
        })
        .collect()
}
