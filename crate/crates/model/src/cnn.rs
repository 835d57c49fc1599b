//! Local-feature branch: conv stem and residual stages.

use citnet_tensor::{Result, Scalar, Var};

use crate::network::{Ctx, Decls, ModelSpec};

pub const STEM_KERNEL: usize = 7;
pub const STEM_STRIDE: usize = 2;
pub const STEM_PADDING: usize = 4;
pub const POOL_KERNEL: usize = 3;
pub const POOL_STRIDE: usize = 2;
pub const POOL_PADDING: usize = 1;

pub(crate) fn declare(spec: &ModelSpec, d: &mut Decls) {
    let c0 = spec.cnn_channels[0];
    d.conv("cnn.stem.conv.weight", c0, spec.in_channels, STEM_KERNEL);
    d.bn("cnn.stem.bn", c0);
    let mut cin = c0;
    for (k, &cout) in spec.cnn_channels.iter().enumerate() {
        for i in 0..spec.cnn_blocks {
            let p = format!("cnn.stage{}.block{}", k + 1, i + 1);
            let (bin, stride) = if i == 0 { (cin, spec.cnn_strides[k]) } else { (cout, 1) };
            d.conv(&format!("{p}.main.conv1.weight"), cout, bin, 3);
            d.bn(&format!("{p}.main.bn1"), cout);
            d.conv(&format!("{p}.main.conv2.weight"), cout, cout, 3);
            d.bn(&format!("{p}.main.bn2"), cout);
            if !spec.standard_shortcut {
                d.conv(&format!("{p}.shortcut.conv3x3.weight"), cout, bin, 3);
                d.conv(&format!("{p}.shortcut.conv1x1.weight"), cout, cout, 1);
                d.bn(&format!("{p}.shortcut.bn"), cout);
            } else if stride != 1 || bin != cout {
                d.conv(&format!("{p}.shortcut.proj.weight"), cout, bin, 1);
                d.bn(&format!("{p}.shortcut.bn"), cout);
            }
        }
        cin = cout;
    }
}

/// `MaxPool(ReLU(BN(Conv7x7(x))))`.
pub fn stem<T: Scalar>(cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
    let w = cx.p("cnn.stem.conv.weight")?;
    let y = cx.g.conv2d(x, w, None, STEM_STRIDE, STEM_PADDING)?;
    cx.record("C0.conv", y);
    let y = cx.bn("cnn.stem.bn", y)?;
    let y = cx.g.relu(y)?;
    cx.g.maxpool2d(y, POOL_KERNEL, POOL_STRIDE, POOL_PADDING)
}

/// `ReLU(main(x) + shortcut(x))`, with `main = BN(Conv3x3(ReLU(BN(Conv3x3(x)))))`
/// and `shortcut = BN(Conv1x1(Conv3x3(x)))`. The stride sits on the first
/// main conv and the shortcut's conv3x3.
pub fn basic_block<T: Scalar>(cx: &mut Ctx<'_, T>, prefix: &str, x: Var, stride: usize, standard: bool) -> Result<Var> {
    let w1 = cx.p(&format!("{prefix}.main.conv1.weight"))?;
    let m = cx.g.conv2d(x, w1, None, stride, 1)?;
    let m = cx.bn(&format!("{prefix}.main.bn1"), m)?;
    let m = cx.g.relu(m)?;
    let w2 = cx.p(&format!("{prefix}.main.conv2.weight"))?;
    let m = cx.g.conv2d(m, w2, None, 1, 1)?;
    let m = cx.bn(&format!("{prefix}.main.bn2"), m)?;

    let s = if !standard {
        let w3 = cx.p(&format!("{prefix}.shortcut.conv3x3.weight"))?;
        let s = cx.g.conv2d(x, w3, None, stride, 1)?;
        let w4 = cx.p(&format!("{prefix}.shortcut.conv1x1.weight"))?;
        let s = cx.g.conv2d(s, w4, None, 1, 0)?;
        cx.bn(&format!("{prefix}.shortcut.bn"), s)?
    } else if cx.params.contains(&format!("{prefix}.shortcut.proj.weight")) {
        let wp = cx.p(&format!("{prefix}.shortcut.proj.weight"))?;
        let s = cx.g.conv2d(x, wp, None, stride, 0)?;
        cx.bn(&format!("{prefix}.shortcut.bn"), s)?
    } else {
        x
    };
    let y = cx.g.add(m, s)?;
    cx.g.relu(y)
}

/// Stage `k` in `1..=4`: the first block carries the stride and channel change.
pub fn stage<T: Scalar>(cx: &mut Ctx<'_, T>, spec: &ModelSpec, k: usize, x: Var) -> Result<Var> {
    let mut y = x;
    for i in 0..spec.cnn_blocks {
        let stride = if i == 0 { spec.cnn_strides[k - 1] } else { 1 };
        y = basic_block(cx, &format!("cnn.stage{k}.block{}", i + 1), y, stride, spec.standard_shortcut)?;
    }
    Ok(y)
}
