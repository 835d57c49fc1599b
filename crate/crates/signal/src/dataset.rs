//! Grid files and dataset directories.
//!
//! `SFGR v1`, little-endian:
//! `"SFGR" | u16 version | u32 bands | u32 height | u32 width | i32 label (-1 = none) | f32 data`.
//! A dataset directory holds grid files plus `index.csv` with rows
//! `file,recording_id,segment,label`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, SignalError};
use crate::grid::SpatialFrequencyGrid;

pub const SFGR_MAGIC: &[u8; 4] = b"SFGR";
pub const SFGR_VERSION: u16 = 1;
pub const INDEX_FILE: &str = "index.csv";
const HEADER_LEN: usize = 22;

pub fn encode_grid(g: &SpatialFrequencyGrid) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + g.data.len() * 4);
    buf.extend_from_slice(SFGR_MAGIC);
    buf.extend_from_slice(&SFGR_VERSION.to_le_bytes());
    for d in [g.bands, g.height, g.width] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&g.label.map_or(-1, |l| l as i32).to_le_bytes());
    for v in &g.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_grid(bytes: &[u8], source_name: &str) -> Result<SpatialFrequencyGrid> {
    let bad = |at: usize, msg: String| SignalError::format(source_name, format!("byte {at}"), msg);
    if bytes.len() < HEADER_LEN {
        return Err(bad(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != SFGR_MAGIC {
        return Err(bad(0, "bad magic, expected `SFGR`".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SFGR_VERSION {
        return Err(bad(4, format!("unsupported version {version}")));
    }
    let u = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (bands, height, width) = (u(6), u(10), u(14));
    let label = i32::from_le_bytes(bytes[18..22].try_into().unwrap());
    let label = match label {
        -1 => None,
        l if l >= 0 => Some(l as usize),
        l => return Err(bad(18, format!("label {l} is negative"))),
    };
    let n = bands.checked_mul(height).and_then(|v| v.checked_mul(width)).ok_or_else(|| bad(6, "extent overflow".into()))?;
    if bytes.len() - HEADER_LEN != n * 4 {
        return Err(bad(HEADER_LEN, format!("expected {} data bytes, found {}", n * 4, bytes.len() - HEADER_LEN)));
    }
    let data = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(SpatialFrequencyGrid { bands, height, width, data, label })
}

pub fn write_grid(g: &SpatialFrequencyGrid, path: &Path) -> Result<()> {
    fs::write(path, encode_grid(g)).map_err(|e| SignalError::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<SpatialFrequencyGrid> {
    let bytes = fs::read(path).map_err(|e| SignalError::io(path, e))?;
    decode_grid(&bytes, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    /// Relative to the dataset directory.
    pub file: String,
    pub recording_id: String,
    pub segment: usize,
    pub label: Option<usize>,
}

/// Writes `{recording_id}_s{segment}.sfgr` files and the index. Returns the entries.
pub fn write_dataset(dir: &Path, recordings: &[(String, Vec<SpatialFrequencyGrid>)]) -> Result<Vec<IndexEntry>> {
    fs::create_dir_all(dir).map_err(|e| SignalError::io(dir, e))?;
    let mut entries = Vec::new();
    let mut index = String::from("file,recording_id,segment,label\n");
    for (id, grids) in recordings {
        if id.contains(',') || id.contains('/') {
            return Err(SignalError::InvalidArgument(format!("recording id `{id}` may not contain `,` or `/`")));
        }
        for (s, g) in grids.iter().enumerate() {
            let file = format!("{id}_s{s:03}.sfgr");
            write_grid(g, &dir.join(&file))?;
            let label = g.label.map(|l| l.to_string()).unwrap_or_default();
            index.push_str(&format!("{file},{id},{s},{label}\n"));
            entries.push(IndexEntry { file, recording_id: id.clone(), segment: s, label: g.label });
        }
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, index).map_err(|e| SignalError::io(&path, e))?;
    Ok(entries)
}

pub fn parse_index(text: &str, source_name: &str) -> Result<Vec<IndexEntry>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("file,")) {
            continue;
        }
        let at = format!("line {}", ln + 1);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(SignalError::format(source_name, at, format!("expected 4 fields, got {}", f.len())));
        }
        let segment = f[2]
            .parse()
            .map_err(|_| SignalError::format(source_name, at.clone(), format!("segment `{}` is not an integer", f[2])))?;
        let label = match f[3].trim() {
            "" => None,
            l => Some(l.parse().map_err(|_| SignalError::format(source_name, at.clone(), format!("label `{l}` is not a class id")))?),
        };
        out.push(IndexEntry { file: f[0].to_string(), recording_id: f[1].to_string(), segment, label });
    }
    Ok(out)
}

/// Loads every indexed grid; the index label wins over the file label.
pub fn read_dataset(dir: &Path) -> Result<Vec<(IndexEntry, SpatialFrequencyGrid)>> {
    let index_path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&index_path).map_err(|e| SignalError::io(&index_path, e))?;
    let entries = parse_index(&text, &index_path.display().to_string())?;
    entries
        .into_iter()
        .map(|e| {
            let mut g = read_grid(&grid_path(dir, &e))?;
            g.label = e.label.or(g.label);
            Ok((e, g))
        })
        .collect()
}

pub fn grid_path(dir: &Path, e: &IndexEntry) -> PathBuf {
    dir.join(&e.file)
}
