//! EEG to spatial-frequency grids: segmentation into fixed windows, Welch
//! band power per electrode, and placement of each band on a scalp grid.
//! Also the on-disk formats for recordings and grid datasets, and a
//! synthetic recording generator.

pub mod bands;
pub mod dataset;
mod error;
pub mod grid;
pub mod io;
pub mod layout;
pub mod pipeline;
pub mod recording;
pub mod segment;
pub mod synth;
pub mod welch;

pub use bands::{default_bands, BandName, BandSpec};
pub use error::{Result, SignalError};
pub use grid::{spatial_map, SpatialFrequencyGrid};
pub use layout::ElectrodeLayout;
pub use pipeline::{build_representation, FeatureConfig};
pub use recording::EegRecording;
pub use segment::{segment, EegSegment};
pub use synth::{synth_eeg, synth_grids, ClassSpec};
pub use welch::{band_psd, Psd, Welch, WelchParams};
