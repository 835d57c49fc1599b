//! Interaction blocks exchanging features between the branches after
//! stages 1 to 3. Both read the same stage outputs.

use citnet_tensor::{Graph, Result, Scalar, Var};

use crate::config::CitMode;
use crate::network::{Decls, Init, ModelSpec};

pub(crate) fn declare(spec: &ModelSpec, d: &mut Decls) {
    let dm = spec.hidden_dim;
    for k in 1..=3 {
        let ck = spec.cnn_channels[k - 1];
        if spec.variant.uses_l2g() {
            d.add(&format!("cit.stage{k}.l2g.weight"), &[ck, dm], Init::Normal(0.02));
            d.add(&format!("cit.stage{k}.l2g.bias"), &[dm], Init::Zeros);
        }
        if spec.variant.uses_g2l() {
            let cin = if spec.variant.keeps_cfm() { ck + dm } else { dm };
            d.conv(&format!("cit.stage{k}.g2l.weight"), ck, cin, 1);
            d.add(&format!("cit.stage{k}.g2l.bias"), &[ck], Init::Zeros);
        }
    }
}

/// Local to global. Pools `fl [N,C,h,w]` to `[N,C]`, maps it to `[N,D]`, and
/// builds the next token stream from `fg [N,L,D]`:
/// `Double` gives `[L copies | fg]`, `SingleToken` gives `[1 copy | fg]`.
/// Without `keep_tfm` the `L` copies replace `fg`.
pub fn l2g<T: Scalar>(
    g: &mut Graph<T>,
    fl: Var,
    fg: Var,
    weight: Var,
    bias: Var,
    mode: CitMode,
    keep_tfm: bool,
) -> Result<Var> {
    let mean = g.reduce_mean_spatial(fl)?;
    let lin = g.linear(mean, weight, Some(bias))?;
    let tok = g.unsqueeze(lin, 1)?;
    let s = g.shape(fg).to_vec();
    let copies = if keep_tfm && mode == CitMode::SingleToken { 1 } else { s[1] };
    let injected = g.expand(tok, &[s[0], copies, s[2]])?;
    if keep_tfm {
        g.concat(&[injected, fg], 1)
    } else {
        Ok(injected)
    }
}

/// Global to local, up to the fusion conv: the first token of `fg`
/// broadcast over `fl`'s spatial extent and appended after `fl` on the
/// channel axis (`[N,C+D,h,w]`), or alone without `keep_cfm` (`[N,D,h,w]`).
pub fn g2l_concat<T: Scalar>(g: &mut Graph<T>, fg: Var, fl: Var, keep_cfm: bool) -> Result<Var> {
    let first = g.select(fg, 1, 0)?;
    let u = g.unsqueeze(first, 2)?;
    let u = g.unsqueeze(u, 3)?;
    let s = g.shape(fl).to_vec();
    let d = g.shape(u)[1];
    let expanded = g.expand(u, &[s[0], d, s[2], s[3]])?;
    if keep_cfm {
        g.concat(&[fl, expanded], 1)
    } else {
        Ok(expanded)
    }
}

/// `Conv1x1(g2l_concat(..))`, back to `C` channels.
pub fn g2l<T: Scalar>(g: &mut Graph<T>, fg: Var, fl: Var, weight: Var, bias: Var, keep_cfm: bool) -> Result<Var> {
    let cat = g2l_concat(g, fg, fl, keep_cfm)?;
    g.conv2d(cat, weight, Some(bias), 1, 0)
}

/// Token count after one interaction stage.
pub fn tokens_after(l: usize, spec: &ModelSpec) -> usize {
    if !spec.variant.uses_l2g() {
        l
    } else if !spec.variant.keeps_tfm() {
        l
    } else {
        match spec.cit_mode {
            CitMode::Double => 2 * l,
            CitMode::SingleToken => l + 1,
        }
    }
}
