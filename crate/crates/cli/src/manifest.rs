//! Run manifests: what a command read, what it wrote, and how long it took.
//!
//! Written last, via a temporary sibling and a rename, so a manifest only
//! exists for a run that finished. Artifact paths are relative to the run
//! directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_s: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Configuration snapshot, command specific.
    pub config: serde_json::Value,
    /// Inputs as given on the command line, with content digests.
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Digest over `artifacts`; equal across runs iff every output file is.
    pub outputs_digest: String,
    pub timings: Timings,
    /// Headline results.
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path, recorded_as: String) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest { path: recorded_as, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// Every regular file under `dir` except the manifest, sorted, with paths relative to `dir`.
pub fn digest_dir(dir: &Path) -> Result<Vec<FileDigest>> {
    let mut files = Vec::new();
    collect(dir, dir, &mut files)?;
    files.sort();
    files
        .into_iter()
        .filter(|(rel, _)| rel != MANIFEST_FILE)
        .map(|(rel, abs)| digest_file(&abs, rel))
        .collect()
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
            out.push((rel, path));
        }
    }
    Ok(())
}

/// Order-sensitive digest of a digest list.
pub fn combined_digest(files: &[FileDigest]) -> String {
    let mut h = Sha256::new();
    for f in files {
        h.update(f.path.as_bytes());
        h.update([0]);
        h.update(f.sha256.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Collects what a command needs to describe its run.
pub struct ManifestBuilder {
    command: String,
    started: SystemTime,
    clock: Instant,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            started: SystemTime::now(),
            clock: Instant::now(),
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn input_file(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest_file(path, path.display().to_string())?);
        Ok(())
    }

    /// Records a dataset directory as one input with its combined digest.
    pub fn input_dir(&mut self, dir: &Path) -> Result<()> {
        let files = digest_dir(dir)?;
        let bytes = files.iter().map(|f| f.bytes).sum();
        self.inputs.push(FileDigest { path: dir.display().to_string(), sha256: combined_digest(&files), bytes });
        Ok(())
    }

    /// Digests everything under `out_dir` and writes the manifest there.
    pub fn finish(self, out_dir: &Path) -> Result<RunManifest> {
        let artifacts = digest_dir(out_dir)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs_digest: combined_digest(&artifacts),
            artifacts,
            timings: Timings {
                started_unix_s: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                wall_seconds: self.clock.elapsed().as_secs_f64(),
            },
            summary: self.summary,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&out_dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(manifest)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
