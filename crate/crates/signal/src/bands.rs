use std::fmt;

use crate::error::{Result, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandName {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl BandName {
    /// Canonical slice order of the stacked representation.
    pub const ALL: [BandName; 5] = [BandName::Delta, BandName::Theta, BandName::Alpha, BandName::Beta, BandName::Gamma];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Delta => "delta",
            BandName::Theta => "theta",
            BandName::Alpha => "alpha",
            BandName::Beta => "beta",
            BandName::Gamma => "gamma",
        }
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A frequency band; bins in `[lo_hz, hi_hz)` belong to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub name: BandName,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandSpec {
    pub fn center_hz(&self) -> f64 {
        0.5 * (self.lo_hz + self.hi_hz)
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo_hz && f < self.hi_hz
    }
}

pub fn default_bands() -> Vec<BandSpec> {
    let edges = [(1.0, 4.0), (4.0, 8.0), (8.0, 14.0), (14.0, 31.0), (31.0, 50.0)];
    BandName::ALL.iter().zip(edges).map(|(&name, (lo_hz, hi_hz))| BandSpec { name, lo_hz, hi_hz }).collect()
}

/// Five bands named from the canonical order, given as edge pairs.
pub fn bands_from_edges(edges: &[(f64, f64)]) -> Result<Vec<BandSpec>> {
    if edges.len() != BandName::ALL.len() {
        return Err(SignalError::Config(format!("expected 5 bands, got {}", edges.len())));
    }
    let bands: Vec<BandSpec> =
        BandName::ALL.iter().zip(edges).map(|(&name, &(lo_hz, hi_hz))| BandSpec { name, lo_hz, hi_hz }).collect();
    validate_bands(&bands)?;
    Ok(bands)
}

/// Parses `lo-hi,lo-hi,...`, e.g. `1-4,4-8,8-14,14-31,31-50`.
pub fn parse_band_edges(text: &str) -> Result<Vec<BandSpec>> {
    let edges = text
        .split(',')
        .map(|part| {
            let (lo, hi) = part
                .trim()
                .split_once('-')
                .ok_or_else(|| SignalError::Config(format!("band `{part}` is not `lo-hi`")))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| SignalError::Config(format!("band edge `{s}` is not a number")))
            };
            Ok((parse(lo)?, parse(hi)?))
        })
        .collect::<Result<Vec<_>>>()?;
    bands_from_edges(&edges)
}

/// Canonical order, positive and increasing edges, no overlap.
pub fn validate_bands(bands: &[BandSpec]) -> Result<()> {
    if bands.len() != BandName::ALL.len() {
        return Err(SignalError::Config(format!("expected 5 bands, got {}", bands.len())));
    }
    for (i, (b, &want)) in bands.iter().zip(BandName::ALL.iter()).enumerate() {
        if b.name != want {
            return Err(SignalError::Config(format!("band {i} is {}, expected {want}", b.name)));
        }
        if !(b.lo_hz > 0.0 && b.lo_hz < b.hi_hz && b.hi_hz.is_finite()) {
            return Err(SignalError::Config(format!("{} edges [{}, {}) are not 0 < lo < hi", b.name, b.lo_hz, b.hi_hz)));
        }
        if i > 0 && b.lo_hz < bands[i - 1].hi_hz {
            return Err(SignalError::Config(format!("{} overlaps {}", b.name, bands[i - 1].name)));
        }
    }
    Ok(())
}

/// Every edge must lie at or below the Nyquist frequency.
pub fn check_nyquist(bands: &[BandSpec], sample_rate: f64) -> Result<()> {
    let nyquist = sample_rate / 2.0;
    match bands.iter().find(|b| b.hi_hz > nyquist) {
        Some(b) => Err(SignalError::Config(format!(
            "{} upper edge {} Hz is above the Nyquist frequency {nyquist} Hz",
            b.name, b.hi_hz
        ))),
        None => Ok(()),
    }
}
