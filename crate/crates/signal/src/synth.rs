//! Synthetic band-power-separable EEG.
//!
//! Class-spec text format (`#` comments, one directive per line):
//! ```text
//! sample_rate 200
//! duration 4            # seconds per recording
//! noise 0.5             # white-noise standard deviation
//! jitter 0.2            # per-recording relative amplitude jitter, uniform in [-j, j]
//! random_phase true
//! channels FP1 FPZ ...  # optional; defaults to the shipped 62-electrode montage
//! group frontal FP1 FPZ FP2 AF3 AF4
//! baseline 1 1 1 1 1    # per-band amplitudes outside any class group
//! class 0 frontal 1 1 4 1 1
//! ```
//! A class may list several groups; later lines win where groups overlap.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bands::BandSpec;
use crate::error::{Result, SignalError};
use crate::layout::ElectrodeLayout;
use crate::recording::EegRecording;

pub const N_BANDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub sample_rate: f64,
    pub duration_seconds: f64,
    pub noise: f64,
    pub jitter: f64,
    pub random_phase: bool,
    pub channels: Vec<String>,
    pub groups: IndexMap<String, Vec<String>>,
    pub baseline: [f64; N_BANDS],
    /// Class id to `(group, per-band amplitudes)` overrides; ids are `0..K`.
    pub classes: IndexMap<usize, Vec<(String, [f64; N_BANDS])>>,
}

impl ClassSpec {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Per-channel band amplitudes of one class, `[channel][band]`.
    pub fn amplitudes(&self, class: usize) -> Result<Vec<[f64; N_BANDS]>> {
        let profile = self
            .classes
            .get(&class)
            .ok_or_else(|| SignalError::InvalidArgument(format!("class {class} is not in the class spec")))?;
        let mut amps = vec![self.baseline; self.channels.len()];
        for (group, a) in profile {
            for e in &self.groups[group] {
                let i = self.channels.iter().position(|c| c.eq_ignore_ascii_case(e)).expect("validated");
                amps[i] = *a;
            }
        }
        Ok(amps)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |ln: usize, msg: String| SignalError::Config(format!("class spec line {}: {msg}", ln + 1));
        let mut spec = ClassSpec {
            sample_rate: 200.0,
            duration_seconds: 4.0,
            noise: 0.0,
            jitter: 0.0,
            random_phase: true,
            channels: ElectrodeLayout::seed62().names().map(str::to_string).collect(),
            groups: IndexMap::new(),
            baseline: [0.0; N_BANDS],
            classes: IndexMap::new(),
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let f: Vec<&str> = line.split_whitespace().collect();
            let Some((&kw, args)) = f.split_first() else {
                continue;
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("`{s}` is not a number")));
            let one = || match args {
                [v] => num(v),
                _ => Err(err(ln, format!("`{kw}` takes one value"))),
            };
            let amps = |vals: &[&str]| -> Result<[f64; N_BANDS]> {
                if vals.len() != N_BANDS {
                    return Err(err(ln, format!("expected {N_BANDS} band amplitudes, got {}", vals.len())));
                }
                let mut a = [0.0; N_BANDS];
                for (slot, v) in a.iter_mut().zip(vals) {
                    *slot = num(v)?;
                    if !(*slot >= 0.0 && slot.is_finite()) {
                        return Err(err(ln, format!("amplitude `{v}` must be finite and >= 0")));
                    }
                }
                Ok(a)
            };
            match kw {
                "sample_rate" => spec.sample_rate = one()?,
                "duration" => spec.duration_seconds = one()?,
                "noise" => spec.noise = one()?,
                "jitter" => spec.jitter = one()?,
                "random_phase" => {
                    spec.random_phase = match args {
                        ["true"] => true,
                        ["false"] => false,
                        _ => return Err(err(ln, "`random_phase` takes true or false".into())),
                    }
                }
                "channels" if !args.is_empty() => spec.channels = args.iter().map(|s| s.to_string()).collect(),
                "group" if args.len() >= 2 => {
                    if spec.groups.insert(args[0].to_string(), args[1..].iter().map(|s| s.to_string()).collect()).is_some() {
                        return Err(err(ln, format!("group `{}` defined twice", args[0])));
                    }
                }
                "baseline" => spec.baseline = amps(args)?,
                "class" if args.len() == 2 + N_BANDS => {
                    let id: usize = args[0].parse().map_err(|_| err(ln, format!("class id `{}` is not an integer", args[0])))?;
                    let a = amps(&args[2..])?;
                    spec.classes.entry(id).or_default().push((args[1].to_string(), a));
                }
                _ => return Err(err(ln, format!("unrecognized directive `{line}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SignalError::io(path, e))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(SignalError::Config(m));
        if self.classes.is_empty() {
            return cfg("class spec defines no classes".into());
        }
        if !(self.sample_rate > 0.0 && self.duration_seconds > 0.0) {
            return cfg("sample_rate and duration must be positive".into());
        }
        if !(self.noise >= 0.0 && (0.0..1.0).contains(&self.jitter)) {
            return cfg("noise must be >= 0 and jitter in [0, 1)".into());
        }
        for (id, profile) in &self.classes {
            if *id >= self.classes.len() {
                return cfg(format!("class ids must be 0..{}, found {id}", self.classes.len()));
            }
            for (group, _) in profile {
                let Some(members) = self.groups.get(group) else {
                    return cfg(format!("class {id} uses undefined group `{group}`"));
                };
                if let Some(e) = members.iter().find(|e| !self.channels.iter().any(|c| c.eq_ignore_ascii_case(e))) {
                    return cfg(format!("group `{group}` names unknown channel `{e}`"));
                }
            }
        }
        let patterns: Vec<_> = (0..self.classes.len()).map(|c| self.amplitudes(c)).collect::<Result<_>>()?;
        for i in 0..patterns.len() {
            for j in i + 1..patterns.len() {
                if patterns[i] == patterns[j] {
                    return cfg(format!("classes {i} and {j} have identical amplitude profiles"));
                }
            }
        }
        Ok(())
    }
}

/// One recording of `class`: a sinusoid per band at the band centre plus
/// white noise. Deterministic in `seed`.
pub fn synth_eeg(spec: &ClassSpec, class: usize, bands: &[BandSpec], seed: u64) -> Result<EegRecording> {
    if bands.len() != N_BANDS {
        return Err(SignalError::Config(format!("expected {N_BANDS} bands, got {}", bands.len())));
    }
    let amps = spec.amplitudes(class)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = spec.sample_rate;
    let n = (spec.duration_seconds * fs).round() as usize;
    let tau = 2.0 * std::f64::consts::PI;
    let mut rows = Vec::with_capacity(spec.channels.len());
    for a in &amps {
        let comps: Vec<(f64, f64, f64)> = bands
            .iter()
            .zip(a)
            .map(|(b, &amp)| {
                let j = if spec.jitter > 0.0 { 1.0 + rng.random_range(-spec.jitter..=spec.jitter) } else { 1.0 };
                let phase = if spec.random_phase { rng.random_range(0.0..tau) } else { 0.0 };
                (amp * j, tau * b.center_hz() / fs, phase)
            })
            .filter(|&(amp, _, _)| amp != 0.0)
            .collect();
        let row = (0..n)
            .map(|i| {
                let mut v: f64 = comps.iter().map(|&(amp, w, ph)| amp * (w * i as f64 + ph).sin()).sum();
                if spec.noise > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v += spec.noise * z;
                }
                v as f32
            })
            .collect();
        rows.push(row);
    }
    Ok(EegRecording::new(spec.channels.clone(), fs, rows)?.with_label(class))
}

/// `per_class` recordings of every class, class-major, with ids `c{class}_r{index}`.
pub fn synth_recordings(
    spec: &ClassSpec,
    per_class: usize,
    bands: &[BandSpec],
    seed: u64,
) -> Result<Vec<(String, EegRecording)>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * spec.num_classes());
    for class in 0..spec.num_classes() {
        for i in 0..per_class {
            let rec = synth_eeg(spec, class, bands, seeds.random())?;
            out.push((format!("c{class}_r{i:04}"), rec));
        }
    }
    Ok(out)
}

/// [`synth_recordings`] run through the feature pipeline: one entry per
/// recording with its grids, labels inherited from the recording.
pub fn synth_grids(
    spec: &ClassSpec,
    per_class: usize,
    cfg: &crate::pipeline::FeatureConfig,
    seed: u64,
) -> Result<Vec<(String, Vec<crate::grid::SpatialFrequencyGrid>)>> {
    synth_recordings(spec, per_class, &cfg.bands, seed)?
        .into_iter()
        .map(|(id, rec)| Ok((id, crate::pipeline::build_representation(&rec, cfg)?)))
        .collect()
}
