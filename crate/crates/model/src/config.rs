//! Experiment configuration, read from a flat TOML file. Unknown keys are errors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use citnet_signal::bands::{parse_band_edges, BandSpec};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    CnnOnly,
    TransformerOnly,
    BaselineConcat,
    L2gOnly,
    L2gOnlyNoTfm,
    G2lOnly,
    G2lOnlyNoCfm,
}

impl Variant {
    /// Ablation row order.
    pub const ALL: [Variant; 8] = [
        Variant::CnnOnly,
        Variant::TransformerOnly,
        Variant::BaselineConcat,
        Variant::Full,
        Variant::L2gOnly,
        Variant::L2gOnlyNoTfm,
        Variant::G2lOnly,
        Variant::G2lOnlyNoCfm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::CnnOnly => "cnn_only",
            Variant::TransformerOnly => "transformer_only",
            Variant::BaselineConcat => "baseline_concat",
            Variant::L2gOnly => "l2g_only",
            Variant::L2gOnlyNoTfm => "l2g_only_no_tfm",
            Variant::G2lOnly => "g2l_only",
            Variant::G2lOnlyNoCfm => "g2l_only_no_cfm",
        }
    }

    /// Row label in the ablation report.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "CIT-EmotionNet",
            Variant::CnnOnly => "With only CNN branch",
            Variant::TransformerOnly => "With only Transformer branch",
            Variant::BaselineConcat => "Baseline",
            Variant::L2gOnly => "With only L2G block",
            Variant::L2gOnlyNoTfm => "With only L2G block and w/o TFM",
            Variant::G2lOnly => "With only G2L block",
            Variant::G2lOnlyNoCfm => "With only G2L block and w/o CFM",
        }
    }

    pub fn uses_cnn(self) -> bool {
        self != Variant::TransformerOnly
    }

    pub fn uses_transformer(self) -> bool {
        self != Variant::CnnOnly
    }

    pub fn uses_l2g(self) -> bool {
        matches!(self, Variant::Full | Variant::L2gOnly | Variant::L2gOnlyNoTfm)
    }

    pub fn uses_g2l(self) -> bool {
        matches!(self, Variant::Full | Variant::G2lOnly | Variant::G2lOnlyNoCfm)
    }

    /// L2G keeps the incoming token stream next to the injected tokens.
    pub fn keeps_tfm(self) -> bool {
        self != Variant::L2gOnlyNoTfm
    }

    /// G2L fuses the incoming CNN map with the broadcast token.
    pub fn keeps_cfm(self) -> bool {
        self != Variant::G2lOnlyNoCfm
    }

    pub fn names() -> String {
        Variant::ALL.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown variant `{s}`; expected one of {}", Variant::names())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CitMode {
    /// L2G injects as many tokens as it receives, doubling the stream.
    Double,
    /// L2G appends one summary token.
    SingleToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchMode {
    /// One token per band slice; the grid must be `patch_size` square.
    Band,
    /// One token per `patch_size` square spatial patch across all bands.
    Spatial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a test-accuracy improvement; 0 disables.
    pub patience: usize,
    pub num_classes: usize,
    /// Band edges as `lo-hi,...` in delta..gamma order.
    pub bands: String,
    pub window_seconds: f64,
    pub grid_height: usize,
    pub grid_width: usize,
    pub cnn_channels: Vec<usize>,
    pub cnn_blocks: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub encoder_blocks: usize,
    pub patch_mode: PatchMode,
    pub patch_size: usize,
    pub cit_mode: CitMode,
    /// Identity (or 1x1 projection) shortcuts instead of the conv3x3 -> conv1x1 -> BN path.
    pub standard_shortcut: bool,
    /// 32 or 64.
    pub precision: u32,
    pub deterministic: bool,
    /// Per-band log1p then train-split z-score.
    pub normalize: bool,
    /// Score the train split in inference mode each epoch instead of
    /// averaging the training-mode batches.
    pub eval_train: bool,
    /// Stop once train accuracy reaches this value.
    pub target_train_acc: Option<f64>,
    /// Fault injection: force a non-finite loss when training this variant.
    pub inject_nan: Option<Variant>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: Variant::Full,
            seed: 0,
            lr: 1e-5,
            batch_size: 32,
            dropout: 0.2,
            train_fraction: 0.6,
            test_fraction: 0.4,
            epochs: 100,
            patience: 20,
            num_classes: 3,
            bands: "1-4,4-8,8-14,14-31,31-50".into(),
            window_seconds: 4.0,
            grid_height: 32,
            grid_width: 32,
            cnn_channels: vec![64, 128, 256, 512],
            cnn_blocks: 2,
            hidden_dim: 256,
            heads: 4,
            mlp_ratio: 4,
            encoder_blocks: 3,
            patch_mode: PatchMode::Band,
            patch_size: 32,
            cit_mode: CitMode::Double,
            standard_shortcut: false,
            precision: 32,
            deterministic: true,
            normalize: true,
            eval_train: false,
            target_train_acc: None,
            inject_nan: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text).map_err(|e| match e {
            ModelError::Config(m) => ModelError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn band_specs(&self) -> Result<Vec<BandSpec>> {
        parse_band_edges(&self.bands).map_err(|e| ModelError::Config(e.to_string()))
    }

    /// Training-side checks. Architecture consistency is checked when a
    /// [`ModelSpec`](crate::network::ModelSpec) is built.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        let (tr, te) = (self.train_fraction, self.test_fraction);
        if !(tr > 0.0 && te > 0.0 && (tr + te - 1.0).abs() < 1e-9) {
            return bad(format!("train_fraction {tr} and test_fraction {te} must be positive and sum to 1"));
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if !(self.window_seconds > 0.0) {
            return bad(format!("window_seconds must be positive, got {}", self.window_seconds));
        }
        if !matches!(self.precision, 32 | 64) {
            return bad(format!("precision must be 32 or 64, got {}", self.precision));
        }
        if let Some(t) = self.target_train_acc {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("target_train_acc {t} outside [0, 1]"));
            }
        }
        self.band_specs()?;
        Ok(())
    }
}
