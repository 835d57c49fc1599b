use crate::error::{Result, SignalError};
use crate::layout::ElectrodeLayout;

/// Band-stacked scalp map, `[bands, height, width]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFrequencyGrid {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub label: Option<usize>,
}

impl SpatialFrequencyGrid {
    pub fn zeros(bands: usize, height: usize, width: usize) -> Self {
        SpatialFrequencyGrid { bands, height, width, data: vec![0.0; bands * height * width], label: None }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.bands, self.height, self.width]
    }

    pub fn at(&self, b: usize, r: usize, c: usize) -> f32 {
        self.data[(b * self.height + r) * self.width + c]
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[b * n..(b + 1) * n]
    }
}

/// Places `features[e][b]` at `[b, row_e, col_e]`; other cells stay zero.
pub fn spatial_map(features: &[Vec<f64>], channels: &[String], layout: &ElectrodeLayout) -> Result<SpatialFrequencyGrid> {
    if features.len() != channels.len() {
        return Err(SignalError::InvalidArgument(format!(
            "{} feature rows for {} channels",
            features.len(),
            channels.len()
        )));
    }
    let bands = features.first().map_or(0, Vec::len);
    let (h, w) = (layout.height(), layout.width());
    let mut grid = SpatialFrequencyGrid::zeros(bands, h, w);
    for (row, name) in features.iter().zip(channels) {
        if row.len() != bands {
            return Err(SignalError::InvalidArgument(format!("channel `{name}` has {} bands, expected {bands}", row.len())));
        }
        let (r, c) = layout.position(name).ok_or_else(|| SignalError::UnmappedChannel(name.clone()))?;
        for (b, &v) in row.iter().enumerate() {
            grid.data[(b * h + r) * w + c] = v as f32;
        }
    }
    Ok(grid)
}
