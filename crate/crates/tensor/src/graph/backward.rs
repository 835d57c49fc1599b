use super::{Graph, Op, Var};
use crate::error::Result;
use crate::kernels::{axis_split, conv2d_backward, for_each_strided};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::{strides, Tensor};

use super::ops::{broadcast_strides, gelu_grad_scalar};

type Contribs<T> = Vec<(Var, Tensor<T>)>;

impl<T: Scalar> Graph<T> {
    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn like(&self, v: Var, data: Vec<T>) -> Result<Tensor<T>> {
        Tensor::new(self.shape(v), data)
    }

    pub(super) fn backward_node(&self, i: usize, gout: &Tensor<T>) -> Result<Contribs<T>> {
        let node = &self.nodes[i];
        let go = gout.data();
        let mut out: Contribs<T> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        out.push((v, gout.clone()));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    out.push((*a, self.like(*a, go.iter().zip(vb).map(|(&g, &y)| g * y).collect())?));
                }
                if self.needs(*b) {
                    out.push((*b, self.like(*b, go.iter().zip(va).map(|(&g, &x)| g * x).collect())?));
                }
            }
            Op::Scale(x, c) => out.push((*x, gout.map(|g| g * *c))),
            Op::Sum(x) => out.push((*x, Tensor::full(self.shape(*x), go[0]))),
            Op::MeanAxis { x, axis } => {
                let s = self.shape(*x);
                let (outer, len, inner) = axis_split(s, *axis);
                let inv = T::one() / T::from_count(len);
                let mut dx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        for j in 0..inner {
                            dx[(o * len + l) * inner + j] = go[o * inner + j] * inv;
                        }
                    }
                }
                out.push((*x, self.like(*x, dx)?));
            }
            Op::Reshape(x) => out.push((*x, gout.clone().reshape(self.shape(*x))?)),
            Op::Permute { x, perm } => {
                let st = strides(self.shape(*x));
                let src: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
                let mut dx = vec![T::zero(); go.len()];
                for_each_strided(gout.shape(), &src, |o, si| dx[si] = go[o]);
                out.push((*x, self.like(*x, dx)?));
            }
            Op::Expand { x } => {
                let src = broadcast_strides(self.shape(*x), gout.shape());
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for_each_strided(gout.shape(), &src, |o, si| dx[si] = dx[si] + go[o]);
                out.push((*x, self.like(*x, dx)?));
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = axis_split(gout.shape(), *axis);
                let mut offset = 0;
                for &v in xs {
                    let len = self.shape(v)[*axis];
                    if self.needs(v) {
                        let mut dx = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            dx.extend_from_slice(&go[start..start + len * inner]);
                        }
                        out.push((v, self.like(v, dx)?));
                    }
                    offset += len;
                }
            }
            Op::Select { x, axis, index } => {
                let (outer, len, inner) = axis_split(self.shape(*x), *axis);
                let mut dx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    dx[(o * len + index) * inner..(o * len + index + 1) * inner]
                        .copy_from_slice(&go[o * inner..(o + 1) * inner]);
                }
                out.push((*x, self.like(*x, dx)?));
            }
            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (din, dout) = (ws[0], ws[1]);
                let m = go.len() / dout.max(1);
                let g_mat = MatRef::row_major(go, m, dout);
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); m * din];
                    gemm(T::one(), g_mat, MatRef::row_major(self.value(*w).data(), din, dout).t(), T::zero(), &mut dx);
                    out.push((*x, self.like(*x, dx)?));
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); din * dout];
                    gemm(T::one(), MatRef::row_major(self.value(*x).data(), m, din).t(), g_mat, T::zero(), &mut dw);
                    out.push((*w, self.like(*w, dw)?));
                }
                if let Some(b) = b.filter(|&b| self.needs(b)) {
                    let mut db = vec![T::zero(); dout];
                    for r in 0..m {
                        for (d, &g) in db.iter_mut().zip(&go[r * dout..(r + 1) * dout]) {
                            *d = *d + g;
                        }
                    }
                    out.push((b, self.like(b, db)?));
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (bt, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *trans_b { sb[1] } else { sb[2] };
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    let mut da = vec![T::zero(); bt * m * k];
                    for i in 0..bt {
                        let g = MatRef::row_major(&go[i * m * n..(i + 1) * m * n], m, n);
                        // C = A B  => dA = dC B^T ; C = A B^T => dA = dC B
                        let bm = if *trans_b {
                            MatRef::row_major(&bd[i * n * k..(i + 1) * n * k], n, k)
                        } else {
                            MatRef::row_major(&bd[i * k * n..(i + 1) * k * n], k, n).t()
                        };
                        gemm(T::one(), g, bm, T::zero(), &mut da[i * m * k..(i + 1) * m * k]);
                    }
                    out.push((*a, self.like(*a, da)?));
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); bt * k * n];
                    for i in 0..bt {
                        let g = MatRef::row_major(&go[i * m * n..(i + 1) * m * n], m, n);
                        let am = MatRef::row_major(&ad[i * m * k..(i + 1) * m * k], m, k);
                        let dst = &mut db[i * k * n..(i + 1) * k * n];
                        if *trans_b {
                            // dB[n,k] = dC^T A
                            gemm(T::one(), g.t(), am, T::zero(), dst);
                        } else {
                            // dB[k,n] = A^T dC
                            gemm(T::one(), am.t(), g, T::zero(), dst);
                        }
                    }
                    out.push((*b, self.like(*b, db)?));
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let need_b = b.is_some_and(|b| self.needs(b));
                let grads = conv2d_backward(
                    self.value(*x).data(),
                    self.value(*w).data(),
                    go,
                    geom,
                    (self.needs(*x), self.needs(*w), need_b),
                );
                if let Some(dx) = grads.dx {
                    out.push((*x, self.like(*x, dx)?));
                }
                if let Some(dw) = grads.dw {
                    out.push((*w, self.like(*w, dw)?));
                }
                if let (Some(b), Some(db)) = (b, grads.db) {
                    out.push((*b, self.like(*b, db)?));
                }
            }
            Op::MaxPool2d { x, argmax } => {
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for (&src, &g) in argmax.iter().zip(go) {
                    dx[src] = dx[src] + g;
                }
                out.push((*x, self.like(*x, dx)?));
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, training } => {
                let s = self.shape(*x);
                let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
                let gs = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for ch in 0..c {
                    for i in 0..n {
                        for j in (i * c + ch) * hw..(i * c + ch + 1) * hw {
                            dgamma[ch] = dgamma[ch] + go[j] * xhat[j];
                            dbeta[ch] = dbeta[ch] + go[j];
                        }
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); go.len()];
                    let m = T::from_count(n * hw);
                    for ch in 0..c {
                        let k = gs[ch] * inv_std[ch];
                        for i in 0..n {
                            for j in (i * c + ch) * hw..(i * c + ch + 1) * hw {
                                dx[j] = if *training {
                                    k * (go[j] - dbeta[ch] / m - xhat[j] * dgamma[ch] / m)
                                } else {
                                    k * go[j]
                                };
                            }
                        }
                    }
                    out.push((*x, self.like(*x, dx)?));
                }
                if self.needs(*gamma) {
                    out.push((*gamma, self.like(*gamma, dgamma)?));
                }
                if self.needs(*beta) {
                    out.push((*beta, self.like(*beta, dbeta)?));
                }
            }
            Op::Relu(x) => {
                let xs = self.value(*x).data();
                let dx = go.iter().zip(xs).map(|(&g, &v)| if v > T::zero() { g } else { T::zero() }).collect();
                out.push((*x, self.like(*x, dx)?));
            }
            Op::Gelu(x) => {
                let xs = self.value(*x).data();
                let dx = go.iter().zip(xs).map(|(&g, &v)| g * gelu_grad_scalar(v)).collect();
                out.push((*x, self.like(*x, dx)?));
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let d = *self.shape(*x).last().unwrap();
                let rows = go.len() / d;
                let gs = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); d];
                let mut dbeta = vec![T::zero(); d];
                let mut dx = vec![T::zero(); go.len()];
                let inv_d = T::one() / T::from_count(d);
                for r in 0..rows {
                    let (g, xh) = (&go[r * d..(r + 1) * d], &xhat[r * d..(r + 1) * d]);
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for j in 0..d {
                        dgamma[j] = dgamma[j] + g[j] * xh[j];
                        dbeta[j] = dbeta[j] + g[j];
                        let dxh = g[j] * gs[j];
                        sum_dxh = sum_dxh + dxh;
                        sum_dxh_xh = sum_dxh_xh + dxh * xh[j];
                    }
                    for j in 0..d {
                        let dxh = g[j] * gs[j];
                        dx[r * d + j] = inv_std[r] * (dxh - sum_dxh * inv_d - xh[j] * sum_dxh_xh * inv_d);
                    }
                }
                if self.needs(*x) {
                    out.push((*x, self.like(*x, dx)?));
                }
                if self.needs(*gamma) {
                    out.push((*gamma, self.like(*gamma, dgamma)?));
                }
                if self.needs(*beta) {
                    out.push((*beta, self.like(*beta, dbeta)?));
                }
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let dot: T = (0..len).map(|l| go[at(l)] * y[at(l)]).sum();
                        for l in 0..len {
                            dx[at(l)] = y[at(l)] * (go[at(l)] - dot);
                        }
                    }
                }
                out.push((*x, self.like(*x, dx)?));
            }
            Op::Dropout { x, mask } => {
                out.push((*x, self.like(*x, go.iter().zip(mask).map(|(&g, &m)| g * m).collect())?));
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = self.shape(*logits)[1];
                let scale = go[0] / T::from_count(labels.len());
                let mut dz: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (i, &y) in labels.iter().enumerate() {
                    dz[i * k + y] = dz[i * k + y] - scale;
                }
                out.push((*logits, self.like(*logits, dz)?));
            }
            Op::Custom { inputs, backward } => {
                let vals: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
                let grads = backward(&vals, &node.value, gout);
                for (&v, g) in inputs.iter().zip(grads) {
                    if let Some(g) = g {
                        if g.shape() != self.shape(v) {
                            return Err(crate::TensorError::Backward(format!(
                                "custom op gradient {:?} for input {:?}",
                                g.shape(),
                                self.shape(v)
                            )));
                        }
                        out.push((v, g));
                    }
                }
            }
        }
        Ok(out)
    }
}
