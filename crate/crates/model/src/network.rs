//! Model assembly: architecture spec, parameter declaration and init,
//! forward pass for every variant, and the shape audit.

use std::fmt::Write as _;

use citnet_tensor::kernels::window_out_extent;
use citnet_tensor::{BatchNormState, Graph, Mode, ModelParams, RunningStats, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cit;
use crate::cnn::{self, POOL_KERNEL, POOL_PADDING, POOL_STRIDE, STEM_KERNEL, STEM_PADDING, STEM_STRIDE};
use crate::config::{CitMode, ExperimentConfig, PatchMode, Variant};
use crate::error::{ModelError, Result};
use crate::vit;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Architecture derived from an [`ExperimentConfig`]; every field is checked
/// for consistency on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub in_channels: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub num_classes: usize,
    pub cnn_channels: Vec<usize>,
    pub cnn_strides: Vec<usize>,
    pub cnn_blocks: usize,
    pub standard_shortcut: bool,
    pub hidden_dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub encoder_blocks: usize,
    pub patch_mode: PatchMode,
    pub patch_size: usize,
    pub cit_mode: CitMode,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = ModelSpec {
            variant: cfg.variant,
            in_channels: cfg.band_specs()?.len(),
            grid_height: cfg.grid_height,
            grid_width: cfg.grid_width,
            num_classes: cfg.num_classes,
            cnn_channels: cfg.cnn_channels.clone(),
            cnn_strides: vec![1, 2, 2, 2],
            cnn_blocks: cfg.cnn_blocks,
            standard_shortcut: cfg.standard_shortcut,
            hidden_dim: cfg.hidden_dim,
            heads: cfg.heads,
            mlp_ratio: cfg.mlp_ratio,
            encoder_blocks: cfg.encoder_blocks,
            patch_mode: cfg.patch_mode,
            patch_size: cfg.patch_size,
            cit_mode: cfg.cit_mode,
            dropout: cfg.dropout,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        ModelSpec { variant, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Architecture(m));
        if self.grid_height == 0 || self.grid_width == 0 || self.in_channels == 0 {
            return bad("grid and band count must be positive".into());
        }
        if self.cnn_channels.len() != 4 || self.cnn_channels.contains(&0) {
            return bad(format!("cnn_channels must list 4 positive widths, got {:?}", self.cnn_channels));
        }
        if self.cnn_channels.windows(2).any(|w| w[1] < w[0]) {
            return bad(format!("cnn_channels must be non-decreasing, got {:?}", self.cnn_channels));
        }
        if self.cnn_blocks == 0 || self.encoder_blocks == 0 || self.mlp_ratio == 0 {
            return bad("cnn_blocks, encoder_blocks and mlp_ratio must be >= 1".into());
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return bad(format!("hidden_dim {} is not divisible by heads {}", self.hidden_dim, self.heads));
        }
        let p = self.patch_size;
        match self.patch_mode {
            PatchMode::Band if self.grid_height != p || self.grid_width != p => {
                return bad(format!(
                    "band patching needs a {p}x{p} grid, got {}x{}; use patch_mode = \"spatial\"",
                    self.grid_height, self.grid_width
                ));
            }
            PatchMode::Spatial if p == 0 || self.grid_height % p != 0 || self.grid_width % p != 0 => {
                return bad(format!(
                    "spatial patch size {p} does not divide the {}x{} grid",
                    self.grid_height, self.grid_width
                ));
            }
            _ => {}
        }
        if self.cnn_spatial().is_none() {
            return bad(format!("a {}x{} grid is too small for the CNN branch", self.grid_height, self.grid_width));
        }
        Ok(())
    }

    /// Flattened length of one patch.
    pub fn patch_dim(&self) -> usize {
        match self.patch_mode {
            PatchMode::Band => self.grid_height * self.grid_width,
            PatchMode::Spatial => self.in_channels * self.patch_size * self.patch_size,
        }
    }

    pub fn initial_tokens(&self) -> usize {
        match self.patch_mode {
            PatchMode::Band => self.in_channels,
            PatchMode::Spatial => (self.grid_height / self.patch_size) * (self.grid_width / self.patch_size),
        }
    }

    /// Tokens entering transformer stages 1..=4.
    pub fn stage_tokens(&self) -> [usize; 4] {
        let mut out = [self.initial_tokens(); 4];
        for k in 1..4 {
            out[k] = cit::tokens_after(out[k - 1], self);
        }
        out
    }

    /// Spatial extents `(h, w)` of the stem conv, C0, and C1..C4.
    pub fn cnn_spatial(&self) -> Option<Vec<(usize, usize)>> {
        let win = |n, k, s, p| window_out_extent(n, k, s, p);
        let ch = win(self.grid_height, STEM_KERNEL, STEM_STRIDE, STEM_PADDING)?;
        let cw = win(self.grid_width, STEM_KERNEL, STEM_STRIDE, STEM_PADDING)?;
        let mut out = vec![(ch, cw)];
        let (mut h, mut w) = (win(ch, POOL_KERNEL, POOL_STRIDE, POOL_PADDING)?, win(cw, POOL_KERNEL, POOL_STRIDE, POOL_PADDING)?);
        out.push((h, w));
        for &s in &self.cnn_strides {
            h = win(h, 3, s, 1)?;
            w = win(w, 3, s, 1)?;
            out.push((h, w));
        }
        Some(out)
    }

    /// Classifier input width.
    pub fn head_width(&self) -> usize {
        let mut w = 0;
        if self.variant.uses_cnn() {
            w += self.cnn_channels[3];
        }
        if self.variant.uses_transformer() {
            w += self.hidden_dim;
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Normal with std `sqrt(2 / fan_in)`.
    HeNormal { fan_in: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Declaration list in initialization order.
#[derive(Debug, Default)]
pub(crate) struct Decls(pub Vec<ParamDecl>);

impl Decls {
    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) {
        self.0.push(ParamDecl { name: name.to_string(), shape: shape.to_vec(), init });
    }

    pub fn conv(&mut self, name: &str, cout: usize, cin: usize, k: usize) {
        self.add(name, &[cout, cin, k, k], Init::HeNormal { fan_in: cin * k * k });
    }

    pub fn bn(&mut self, prefix: &str, c: usize) {
        self.add(&format!("{prefix}.gamma"), &[c], Init::Ones);
        self.add(&format!("{prefix}.beta"), &[c], Init::Zeros);
        self.add(&format!("{prefix}.running_mean"), &[c], Init::Zeros);
        self.add(&format!("{prefix}.running_var"), &[c], Init::Ones);
    }
}

pub fn declare_params(spec: &ModelSpec) -> Vec<ParamDecl> {
    let mut d = Decls::default();
    if spec.variant.uses_cnn() {
        cnn::declare(spec, &mut d);
    }
    if spec.variant.uses_transformer() {
        vit::declare(spec, &mut d);
    }
    cit::declare(spec, &mut d);
    d.add("head.fc.weight", &[spec.head_width(), spec.num_classes], Init::Normal(0.02));
    d.add("head.fc.bias", &[spec.num_classes], Init::Zeros);
    d.0
}

/// Draws every random tensor from one ChaCha8 stream in declaration order.
pub fn init_params<T: Scalar>(spec: &ModelSpec, seed: u64) -> Result<ModelParams<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    for d in declare_params(spec) {
        let t = match d.init {
            Init::Zeros => Tensor::zeros(&d.shape),
            Init::Ones => Tensor::ones(&d.shape),
            Init::Normal(std) => Tensor::randn(&d.shape, std, &mut rng),
            Init::HeNormal { fan_in } => Tensor::randn(&d.shape, (2.0 / fan_in as f64).sqrt(), &mut rng),
        };
        params.insert_named(d.name, t)?;
    }
    Ok(params)
}

/// Number of trainable scalars, computed from declarations alone.
pub fn trainable_count(spec: &ModelSpec) -> usize {
    declare_params(spec)
        .iter()
        .filter(|d| !citnet_tensor::params::is_buffer_name(&d.name))
        .map(|d| d.shape.iter().product::<usize>())
        .sum()
}

/// Checks that `params` holds exactly the declared names and shapes.
pub fn check_params<T: Scalar>(spec: &ModelSpec, params: &ModelParams<T>) -> Result<()> {
    let decls = declare_params(spec);
    for d in &decls {
        let t = params
            .get(&d.name)
            .map_err(|_| ModelError::Architecture(format!("missing parameter `{}` for variant {}", d.name, spec.variant)))?;
        if t.shape() != d.shape.as_slice() {
            return Err(ModelError::Architecture(format!(
                "parameter `{}` has shape {:?}, expected {:?}",
                d.name,
                t.shape(),
                d.shape
            )));
        }
    }
    if params.len() != decls.len() {
        let extra: Vec<_> = params.names().filter(|n| !decls.iter().any(|d| d.name == *n)).collect();
        return Err(ModelError::Architecture(format!("unexpected parameters for variant {}: {extra:?}", spec.variant)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub label: String,
    pub shape: Vec<usize>,
}

/// Forward-pass context: graph, parameters, pending batch-norm updates and
/// an optional shape recorder.
pub struct Ctx<'a, T: Scalar> {
    pub g: &'a mut Graph<T>,
    pub params: &'a ModelParams<T>,
    pub bn_updates: Vec<(String, RunningStats<T>)>,
    pub trace: Option<Vec<TraceEntry>>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn new(g: &'a mut Graph<T>, params: &'a ModelParams<T>) -> Self {
        Ctx { g, params, bn_updates: Vec::new(), trace: None }
    }

    pub fn p(&mut self, name: &str) -> citnet_tensor::Result<Var> {
        self.g.param(self.params, name)
    }

    pub fn record(&mut self, label: &str, v: Var) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEntry { label: label.to_string(), shape: self.g.shape(v).to_vec() });
        }
    }

    /// Batch norm with the running statistics stored under `prefix`; the
    /// training-mode update is queued in `bn_updates`.
    pub fn bn(&mut self, prefix: &str, x: Var) -> citnet_tensor::Result<Var> {
        let gamma = self.p(&format!("{prefix}.gamma"))?;
        let beta = self.p(&format!("{prefix}.beta"))?;
        let state = BatchNormState {
            running_mean: self.params.get(&format!("{prefix}.running_mean"))?,
            running_var: self.params.get(&format!("{prefix}.running_var"))?,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        };
        let (y, stats) = self.g.batchnorm2d(x, gamma, beta, state)?;
        if let Some(s) = stats {
            self.bn_updates.push((prefix.to_string(), s));
        }
        Ok(y)
    }
}

pub struct ForwardOutput<T> {
    pub logits: Var,
    pub bn_updates: Vec<(String, RunningStats<T>)>,
    pub trace: Option<Vec<TraceEntry>>,
}

/// Logits `[N, num_classes]` for a batch `[N, bands, H, W]`.
pub fn forward<T: Scalar>(
    g: &mut Graph<T>,
    params: &ModelParams<T>,
    spec: &ModelSpec,
    x: Var,
    record: bool,
) -> Result<ForwardOutput<T>> {
    let xs = g.shape(x).to_vec();
    let want = [spec.in_channels, spec.grid_height, spec.grid_width];
    if xs.len() != 4 || xs[1..] != want {
        return Err(ModelError::Architecture(format!("input {:?} does not match [N, {}, {}, {}]", xs, want[0], want[1], want[2])));
    }
    let v = spec.variant;
    let mut cx = Ctx::new(g, params);
    if record {
        cx.trace = Some(Vec::new());
    }
    cx.record("input", x);

    let mut c = None;
    let mut t = None;
    if v.uses_cnn() {
        let y = cnn::stem(&mut cx, x)?;
        cx.record("C0", y);
        c = Some(y);
    }
    if v.uses_transformer() {
        let y = vit::embed(&mut cx, spec, x)?;
        cx.record("T0", y);
        t = Some(y);
    }
    for k in 1..=4 {
        if let Some(y) = c {
            let y = cnn::stage(&mut cx, spec, k, y)?;
            cx.record(&format!("C{k}"), y);
            c = Some(y);
        }
        if let Some(y) = t {
            let y = vit::stage(&mut cx, spec, k, y)?;
            cx.record(&format!("T{k}"), y);
            t = Some(y);
        }
        if k == 4 {
            break;
        }
        // Both blocks read the stage-k outputs.
        let (ck, tk) = (c, t);
        if let (true, Some(fl), Some(fg)) = (v.uses_l2g(), ck, tk) {
            let w = cx.p(&format!("cit.stage{k}.l2g.weight"))?;
            let b = cx.p(&format!("cit.stage{k}.l2g.bias"))?;
            let y = cit::l2g(cx.g, fl, fg, w, b, spec.cit_mode, v.keeps_tfm())?;
            cx.record(&format!("cit{k}.l2g"), y);
            t = Some(y);
        }
        if let (true, Some(fl), Some(fg)) = (v.uses_g2l(), ck, tk) {
            let cat = cit::g2l_concat(cx.g, fg, fl, v.keeps_cfm())?;
            cx.record(&format!("cit{k}.g2l.concat"), cat);
            let w = cx.p(&format!("cit.stage{k}.g2l.weight"))?;
            let b = cx.p(&format!("cit.stage{k}.g2l.bias"))?;
            let y = cx.g.conv2d(cat, w, Some(b), 1, 0)?;
            cx.record(&format!("cit{k}.g2l"), y);
            c = Some(y);
        }
    }

    let mut pooled = Vec::new();
    if let Some(y) = c {
        let p = cx.g.reduce_mean_spatial(y)?;
        cx.record("head.cnn_pool", p);
        pooled.push(p);
    }
    if let Some(y) = t {
        let p = cx.g.mean_axis(y, 1)?;
        cx.record("head.vit_pool", p);
        pooled.push(p);
    }
    let h = if pooled.len() == 1 { pooled[0] } else { cx.g.concat(&pooled, 1)? };
    cx.record("head.input", h);
    let h = cx.g.dropout(h, spec.dropout)?;
    let w = cx.p("head.fc.weight")?;
    let b = cx.p("head.fc.bias")?;
    let logits = cx.g.linear(h, w, Some(b))?;
    cx.record("logits", logits);
    Ok(ForwardOutput { logits, bn_updates: cx.bn_updates, trace: cx.trace })
}

/// Writes queued running statistics back into the buffers.
pub fn apply_bn_updates<T: Scalar>(params: &mut ModelParams<T>, updates: Vec<(String, RunningStats<T>)>) -> Result<()> {
    for (prefix, s) in updates {
        params.set(&format!("{prefix}.running_mean"), s.mean)?;
        params.set(&format!("{prefix}.running_var"), s.var)?;
    }
    Ok(())
}

/// The trace [`forward`] must produce, derived from the shape formulas alone.
pub fn expected_trace(spec: &ModelSpec, n: usize) -> Vec<TraceEntry> {
    let mut out = Vec::new();
    let mut push = |label: String, shape: Vec<usize>| out.push(TraceEntry { label, shape });
    let v = spec.variant;
    let d = spec.hidden_dim;
    let sp = spec.cnn_spatial().expect("validated spec");
    let tokens = spec.stage_tokens();
    let ch = &spec.cnn_channels;
    push("input".into(), vec![n, spec.in_channels, spec.grid_height, spec.grid_width]);
    if v.uses_cnn() {
        push("C0.conv".into(), vec![n, ch[0], sp[0].0, sp[0].1]);
        push("C0".into(), vec![n, ch[0], sp[1].0, sp[1].1]);
    }
    if v.uses_transformer() {
        push("T0".into(), vec![n, tokens[0], d]);
    }
    for k in 1..=4 {
        let (h, w) = sp[k + 1];
        if v.uses_cnn() {
            push(format!("C{k}"), vec![n, ch[k - 1], h, w]);
        }
        if v.uses_transformer() {
            push(format!("T{k}"), vec![n, tokens[k - 1], d]);
        }
        if k == 4 || !(v.uses_cnn() && v.uses_transformer()) {
            continue;
        }
        if v.uses_l2g() {
            push(format!("cit{k}.l2g"), vec![n, tokens[k], d]);
        }
        if v.uses_g2l() {
            let cin = if v.keeps_cfm() { ch[k - 1] + d } else { d };
            push(format!("cit{k}.g2l.concat"), vec![n, cin, h, w]);
            push(format!("cit{k}.g2l"), vec![n, ch[k - 1], h, w]);
        }
    }
    if v.uses_cnn() {
        push("head.cnn_pool".into(), vec![n, ch[3]]);
    }
    if v.uses_transformer() {
        push("head.vit_pool".into(), vec![n, d]);
    }
    push("head.input".into(), vec![n, spec.head_width()]);
    push("logits".into(), vec![n, spec.num_classes]);
    out
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub actual: Vec<TraceEntry>,
    pub expected: Vec<TraceEntry>,
    /// Human-readable differences; empty when the traces agree.
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let width = self.actual.iter().map(|e| e.label.len()).max().unwrap_or(0);
        for e in &self.actual {
            let _ = writeln!(s, "{:<width$}  {:?}", e.label, e.shape);
        }
        for m in &self.mismatches {
            let _ = writeln!(s, "MISMATCH {m}");
        }
        s
    }
}

/// Runs an inference forward on zeros and compares the recorded trace with
/// [`expected_trace`].
pub fn shape_audit(spec: &ModelSpec, n: usize) -> Result<AuditReport> {
    let params = init_params::<f32>(spec, 0)?;
    let mut g = Graph::<f32>::new(Mode::Eval, 0);
    let x = g.input(Tensor::zeros(&[n, spec.in_channels, spec.grid_height, spec.grid_width]));
    let out = forward(&mut g, &params, spec, x, true)?;
    let actual = out.trace.unwrap_or_default();
    let expected = expected_trace(spec, n);
    let mut mismatches = Vec::new();
    for i in 0..actual.len().max(expected.len()) {
        match (actual.get(i), expected.get(i)) {
            (Some(a), Some(e)) if a == e => {}
            (a, e) => mismatches.push(format!("entry {i}: got {a:?}, expected {e:?}")),
        }
    }
    Ok(AuditReport { actual, expected, mismatches })
}
