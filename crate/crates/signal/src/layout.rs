//! Electrode-to-grid placement.
//!
//! Text format: `#` starts a comment, the first content line is `grid H W`,
//! every other line is `NAME row col`. Names match case-insensitively.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Result, SignalError};

const SEED62: &str = include_str!("../data/seed62_32x32.layout");

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeLayout {
    height: usize,
    width: usize,
    cells: IndexMap<String, (usize, usize)>,
}

fn key(name: &str) -> String {
    name.trim().to_ascii_uppercase()
}

impl ElectrodeLayout {
    /// Rejects out-of-bounds cells, shared cells, and repeated names.
    pub fn new(height: usize, width: usize, entries: impl IntoIterator<Item = (String, (usize, usize))>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SignalError::Layout(format!("grid {height}x{width} is empty")));
        }
        let mut cells = IndexMap::new();
        let mut owner: IndexMap<(usize, usize), String> = IndexMap::new();
        for (name, (r, c)) in entries {
            if r >= height || c >= width {
                return Err(SignalError::Layout(format!("`{name}` at ({r}, {c}) is outside the {height}x{width} grid")));
            }
            if let Some(prev) = owner.insert((r, c), name.clone()) {
                return Err(SignalError::Layout(format!("`{name}` and `{prev}` share cell ({r}, {c})")));
            }
            if cells.insert(key(&name), (r, c)).is_some() {
                return Err(SignalError::Layout(format!("electrode `{name}` listed twice")));
            }
        }
        Ok(ElectrodeLayout { height, width, cells })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = None;
        let mut entries = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| SignalError::Layout(format!("line {}: `{s}` is not a non-negative integer", ln + 1)))
            };
            if f.len() != 3 {
                return Err(SignalError::Layout(format!("line {}: expected 3 fields, got {}", ln + 1, f.len())));
            }
            match grid {
                None if f[0] == "grid" => grid = Some((num(f[1])?, num(f[2])?)),
                None => return Err(SignalError::Layout(format!("line {}: first entry must be `grid H W`", ln + 1))),
                Some(_) => entries.push((f[0].to_string(), (num(f[1])?, num(f[2])?))),
            }
        }
        let (h, w) = grid.ok_or_else(|| SignalError::Layout("missing `grid H W` line".into()))?;
        Self::new(h, w, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SignalError::io(path, e))?;
        Self::parse(&text).map_err(|e| SignalError::Layout(format!("{}: {e}", path.display())))
    }

    /// The shipped 62-electrode montage on a 32x32 grid.
    pub fn seed62() -> Self {
        Self::parse(SEED62).expect("shipped layout is valid")
    }

    /// The shipped montage text, for writing alongside outputs.
    pub fn seed62_text() -> &'static str {
        SEED62
    }

    /// Same electrodes on an `h x w` grid, cells scaled by
    /// `round(i * (h - 1) / (H - 1))`. Fails if two electrodes collide.
    pub fn rescaled(&self, h: usize, w: usize) -> Result<Self> {
        let scale = |i: usize, from: usize, to: usize| {
            if from <= 1 {
                0
            } else {
                (i as f64 * (to - 1) as f64 / (from - 1) as f64).round() as usize
            }
        };
        Self::new(
            h,
            w,
            self.cells
                .iter()
                .map(|(n, &(r, c))| (n.clone(), (scale(r, self.height, h), scale(c, self.width, w)))),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<(usize, usize)> {
        self.cells.get(&key(name)).copied()
    }

    /// Electrode names in file order, upper-cased.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    /// First channel without a cell, if any.
    pub fn check_covers<'a>(&self, channels: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for ch in channels {
            if self.position(ch).is_none() {
                return Err(SignalError::UnmappedChannel(ch.to_string()));
            }
        }
        Ok(())
    }
}
