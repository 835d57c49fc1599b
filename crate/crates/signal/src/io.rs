//! Recording and label file formats.
//!
//! `EEGB v1`, little-endian throughout:
//! ```text
//! "EEGB" | u16 version = 1 | u32 n_channels | f32 sample_rate | u64 n_samples
//! n_channels x (u32 byte length | UTF-8 name)
//! n_channels x n_samples f32, channel-major
//! ```
//! CSV recordings carry a header row of channel names and one row per sample;
//! the sample rate comes from the caller.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, SignalError};
use crate::recording::EegRecording;

pub const EEGB_MAGIC: &[u8; 4] = b"EEGB";
pub const EEGB_VERSION: u16 = 1;

pub fn encode_eegb(rec: &EegRecording) -> Vec<u8> {
    let mut buf = Vec::with_capacity(22 + rec.samples().len() * 4);
    buf.extend_from_slice(EEGB_MAGIC);
    buf.extend_from_slice(&EEGB_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rec.n_channels() as u32).to_le_bytes());
    buf.extend_from_slice(&(rec.sample_rate() as f32).to_le_bytes());
    buf.extend_from_slice(&(rec.n_samples() as u64).to_le_bytes());
    for name in rec.channel_names() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    for v in rec.samples() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    name: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> SignalError {
        SignalError::format(self.name, format!("byte {}", self.pos), msg)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }
}

pub fn decode_eegb(bytes: &[u8], source_name: &str) -> Result<EegRecording> {
    let mut c = Cursor { name: source_name, bytes, pos: 0 };
    if c.take(4, "magic")? != EEGB_MAGIC {
        c.pos = 0;
        return Err(c.err("bad magic, expected `EEGB`"));
    }
    let version = u16::from_le_bytes(c.array("version")?);
    if version != EEGB_VERSION {
        c.pos -= 2;
        return Err(c.err(format!("unsupported version {version}")));
    }
    let n_ch = u32::from_le_bytes(c.array("channel count")?) as usize;
    let rate = f32::from_le_bytes(c.array("sample rate")?);
    let n = u64::from_le_bytes(c.array("sample count")?);
    let mut names = Vec::with_capacity(n_ch.min(4096));
    for i in 0..n_ch {
        let len = u32::from_le_bytes(c.array("name length")?) as usize;
        let start = c.pos;
        let raw = c.take(len, "channel name")?;
        let name = std::str::from_utf8(raw).map_err(|_| {
            SignalError::format(source_name, format!("byte {start}"), format!("channel {i} name is not UTF-8"))
        })?;
        names.push(name.to_string());
    }
    let n = usize::try_from(n).map_err(|_| c.err("sample count overflows"))?;
    let total = n_ch.checked_mul(n).and_then(|v| v.checked_mul(4)).ok_or_else(|| c.err("sample count overflows"))?;
    let data = c.take(total, "samples")?;
    if c.pos != bytes.len() {
        return Err(c.err(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let samples = data.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    EegRecording::from_channel_major(names, rate as f64, n, samples)
        .map_err(|e| SignalError::format(source_name, "header", e.to_string()))
}

pub fn read_eegb(path: &Path) -> Result<EegRecording> {
    let bytes = fs::read(path).map_err(|e| SignalError::io(path, e))?;
    decode_eegb(&bytes, &path.display().to_string())
}

pub fn write_eegb(rec: &EegRecording, path: &Path) -> Result<()> {
    fs::write(path, encode_eegb(rec)).map_err(|e| SignalError::io(path, e))
}

pub fn parse_csv_recording(text: &str, sample_rate: f64, source_name: &str) -> Result<EegRecording> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(SignalError::format(source_name, "row 1", "missing header row"));
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut cols: Vec<Vec<f32>> = vec![Vec::new(); names.len()];
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(SignalError::format(
                source_name,
                format!("row {}", ln + 1),
                format!("{} fields, header has {} channels", fields.len(), names.len()),
            ));
        }
        for (col, f) in cols.iter_mut().zip(fields) {
            let v: f32 = f.trim().parse().map_err(|_| {
                SignalError::format(source_name, format!("row {}", ln + 1), format!("`{}` is not a number", f.trim()))
            })?;
            col.push(v);
        }
    }
    EegRecording::new(names, sample_rate, cols).map_err(|e| SignalError::format(source_name, "header", e.to_string()))
}

pub fn read_csv_recording(path: &Path, sample_rate: f64) -> Result<EegRecording> {
    let text = fs::read_to_string(path).map_err(|e| SignalError::io(path, e))?;
    parse_csv_recording(&text, sample_rate, &path.display().to_string())
}

/// Reads `.eegb` as binary and anything else as CSV.
pub fn read_recording(path: &Path, csv_sample_rate: f64) -> Result<EegRecording> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("eegb") => read_eegb(path),
        _ => read_csv_recording(path, csv_sample_rate),
    }
}

/// `recording_id,label` rows; a header row is optional.
pub fn parse_labels(text: &str, source_name: &str) -> Result<HashMap<String, usize>> {
    let mut out = HashMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = format!("line {}", ln + 1);
        let Some((id, label)) = line.split_once(',') else {
            return Err(SignalError::format(source_name, at, "expected `recording_id,label`"));
        };
        let (id, label) = (id.trim(), label.trim());
        if ln == 0 && id == "recording_id" {
            continue;
        }
        let label: usize = label
            .parse()
            .map_err(|_| SignalError::format(source_name, at.clone(), format!("label `{label}` is not a class id")))?;
        if out.insert(id.to_string(), label).is_some() {
            return Err(SignalError::format(source_name, at, format!("duplicate recording id `{id}`")));
        }
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<HashMap<String, usize>> {
    let text = fs::read_to_string(path).map_err(|e| SignalError::io(path, e))?;
    parse_labels(&text, &path.display().to_string())
}
