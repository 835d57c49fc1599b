#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BENCHMARK_SPEC: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../signal/data/benchmark3.spec");

/// Small enough that a CLI training run takes well under a second.
pub const TINY_CONFIG: &str = "\
cnn_channels = [4, 4, 8, 8]
cnn_blocks = 1
hidden_dim = 8
heads = 2
mlp_ratio = 2
encoder_blocks = 1
batch_size = 8
epochs = 2
patience = 0
lr = 1e-3
";

pub fn citnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citnet")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Benchmark grids, `per_class` recordings of each of the three classes.
pub fn synth(dir: &Path, per_class: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("synth_{per_class}_{seed}"));
    let o = citnet(&["synth", "--classes", BENCHMARK_SPEC, "--per-class", &per_class.to_string(), "--seed", &seed.to_string(), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}
