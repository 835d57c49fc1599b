//! Global-feature branch: patch embedding and pre-norm encoder stages.

use citnet_tensor::{Graph, Result, Scalar, Var};

use crate::config::PatchMode;
use crate::network::{Ctx, Decls, Init, ModelSpec};

pub const LN_EPS: f64 = 1e-5;

pub(crate) fn declare(spec: &ModelSpec, d: &mut Decls) {
    let dm = spec.hidden_dim;
    d.add("vit.embed.proj.weight", &[spec.patch_dim(), dm], Init::Normal(0.02));
    d.add("vit.embed.proj.bias", &[dm], Init::Zeros);
    d.add("vit.embed.pos", &[spec.initial_tokens(), dm], Init::Normal(0.02));
    for k in 1..=4 {
        for i in 1..=spec.encoder_blocks {
            let p = format!("vit.stage{k}.block{i}");
            d.add(&format!("{p}.ln1.gamma"), &[dm], Init::Ones);
            d.add(&format!("{p}.ln1.beta"), &[dm], Init::Zeros);
            for w in ["wq", "wk", "wv", "wo"] {
                d.add(&format!("{p}.mha.{w}"), &[dm, dm], Init::Normal(0.02));
            }
            d.add(&format!("{p}.ln2.gamma"), &[dm], Init::Ones);
            d.add(&format!("{p}.ln2.beta"), &[dm], Init::Zeros);
            let hid = dm * spec.mlp_ratio;
            d.add(&format!("{p}.mlp.fc1.weight"), &[dm, hid], Init::Normal(0.02));
            d.add(&format!("{p}.mlp.fc1.bias"), &[hid], Init::Zeros);
            d.add(&format!("{p}.mlp.fc2.weight"), &[hid, dm], Init::Normal(0.02));
            d.add(&format!("{p}.mlp.fc2.bias"), &[dm], Init::Zeros);
        }
    }
}

/// Patches to tokens `[N, L, D]`, plus the learned positional embedding.
pub fn embed<T: Scalar>(cx: &mut Ctx<'_, T>, spec: &ModelSpec, x: Var) -> Result<Var> {
    let s = cx.g.shape(x).to_vec();
    let (n, b, h, w) = (s[0], s[1], s[2], s[3]);
    let patches = match spec.patch_mode {
        PatchMode::Band => cx.g.reshape(x, &[n, b, h * w])?,
        PatchMode::Spatial => {
            let p = spec.patch_size;
            let y = cx.g.reshape(x, &[n, b, h / p, p, w / p, p])?;
            let y = cx.g.permute(y, &[0, 2, 4, 1, 3, 5])?;
            cx.g.reshape(y, &[n, (h / p) * (w / p), b * p * p])?
        }
    };
    let wp = cx.p("vit.embed.proj.weight")?;
    let bp = cx.p("vit.embed.proj.bias")?;
    let t = cx.g.linear(patches, wp, Some(bp))?;
    let pos = cx.p("vit.embed.pos")?;
    let pos = cx.g.unsqueeze(pos, 0)?;
    let l = cx.g.shape(t)[1];
    let pos = cx.g.expand(pos, &[n, l, spec.hidden_dim])?;
    cx.g.add(t, pos)
}

/// Parameters of one encoder block, already bound in a graph.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
    pub fc1_weight: Var,
    pub fc1_bias: Var,
    pub fc2_weight: Var,
    pub fc2_bias: Var,
}

impl EncoderVars {
    pub fn bind<T: Scalar>(cx: &mut Ctx<'_, T>, prefix: &str) -> Result<Self> {
        let mut p = |s: &str| cx.p(&format!("{prefix}.{s}"));
        Ok(EncoderVars {
            ln1_gamma: p("ln1.gamma")?,
            ln1_beta: p("ln1.beta")?,
            wq: p("mha.wq")?,
            wk: p("mha.wk")?,
            wv: p("mha.wv")?,
            wo: p("mha.wo")?,
            ln2_gamma: p("ln2.gamma")?,
            ln2_beta: p("ln2.beta")?,
            fc1_weight: p("mlp.fc1.weight")?,
            fc1_bias: p("mlp.fc1.bias")?,
            fc2_weight: p("mlp.fc2.weight")?,
            fc2_bias: p("mlp.fc2.bias")?,
        })
    }
}

/// `y = x + Dropout(MHA(LN1(x)))`, `out = y + MLP(LN2(y))`.
pub fn encoder_block<T: Scalar>(g: &mut Graph<T>, x: Var, p: &EncoderVars, heads: usize, dropout: f64) -> Result<Var> {
    let a = g.layernorm(x, p.ln1_gamma, p.ln1_beta, LN_EPS)?;
    let a = g.multi_head_attention(a, p.wq, p.wk, p.wv, p.wo, heads)?;
    let a = g.dropout(a, dropout)?;
    let y = g.add(x, a)?;
    let m = g.layernorm(y, p.ln2_gamma, p.ln2_beta, LN_EPS)?;
    let m = g.mlp_block(m, p.fc1_weight, p.fc1_bias, p.fc2_weight, p.fc2_bias, dropout)?;
    g.add(y, m)
}

pub fn stage<T: Scalar>(cx: &mut Ctx<'_, T>, spec: &ModelSpec, k: usize, x: Var) -> Result<Var> {
    let mut y = x;
    for i in 1..=spec.encoder_blocks {
        let vars = EncoderVars::bind(cx, &format!("vit.stage{k}.block{i}"))?;
        y = encoder_block(cx.g, y, &vars, spec.heads, spec.dropout)?;
    }
    Ok(y)
}
