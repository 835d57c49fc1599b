//! `CKPT v1` parameter files.
//!
//! ```text
//! "CKPT" | u16 version | u32 entries
//! per entry: u32 name_len | name (UTF-8) | u8 rank | rank x u32 extent | f32 data
//! u64 byte length of everything above (truncation check)
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

pub const MAGIC: &[u8; 4] = b"CKPT";
pub const VERSION: u16 = 1;

pub fn encode<T: Scalar>(params: &ModelParams<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, entry) in params.iter() {
        let shape = entry.tensor.shape();
        if shape.len() > u8::MAX as usize {
            return Err(TensorError::Checkpoint(format!("`{name}` has rank {}", shape.len())));
        }
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in entry.tensor.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let len = buf.len() as u64;
    buf.extend_from_slice(&len.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(TensorError::Checkpoint(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>> {
    if bytes.len() < 4 + 2 + 4 + 8 {
        return Err(TensorError::Checkpoint("file too short".into()));
    }
    let body_len = bytes.len() - 8;
    let footer = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if footer != body_len as u64 {
        return Err(TensorError::Checkpoint(format!(
            "truncated or corrupt: footer records {footer} bytes, found {body_len}"
        )));
    }
    let mut r = Reader { bytes: &bytes[..body_len], pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| TensorError::Checkpoint(format!("entry name is not UTF-8: {e}")))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let raw = r.take(numel(&shape) * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        params.insert_named(name, Tensor::new(&shape, data)?)?;
    }
    if r.pos != body_len {
        return Err(TensorError::Checkpoint(format!("{} trailing bytes before footer", body_len - r.pos)));
    }
    Ok(params)
}

/// Writes via a temporary sibling file and rename.
pub fn save<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    let bytes = encode(params)?;
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    decode(&fs::read(path)?)
}
