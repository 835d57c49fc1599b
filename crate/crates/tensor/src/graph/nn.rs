use super::{Graph, Op, Var};
use crate::error::{arg_err, shape_err, Result};
use crate::kernels::{axis_split, conv2d_forward, maxpool2d_forward, Conv2dGeom, Pool2dGeom};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

/// Running statistics handed to [`Graph::batchnorm2d`].
#[derive(Debug, Clone, Copy)]
pub struct BatchNormState<'a, T> {
    pub running_mean: &'a Tensor<T>,
    pub running_var: &'a Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

/// Updated running statistics produced by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> Graph<T> {
    /// `x[..., D_in] @ w[D_in, D_out] (+ b[D_out])`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.is_empty() || *xs.last().unwrap() != ws[0] {
            return shape_err("linear", format!("input {:?} incompatible with weight {:?}", xs, ws));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return shape_err("linear", format!("bias {:?} does not match weight {:?}", self.shape(b), ws));
            }
        }
        let (din, dout) = (ws[0], ws[1]);
        let m = self.value(x).len() / din.max(1);
        let mut out = match b {
            Some(b) => {
                let bv = self.value(b).data();
                let mut o = Vec::with_capacity(m * dout);
                for _ in 0..m {
                    o.extend_from_slice(bv);
                }
                o
            }
            None => vec![T::zero(); m * dout],
        };
        gemm(
            T::one(),
            MatRef::row_major(self.value(x).data(), m, din),
            MatRef::row_major(self.value(w).data(), din, dout),
            T::one(),
            &mut out,
        );
        let mut oshape = xs;
        *oshape.last_mut().unwrap() = dout;
        let out = Tensor::new(&oshape, out)?;
        self.push("linear", out, Op::Linear { x, w, b })
    }

    /// Batched matrix product `[B,m,k] x [B,k,n]`, or `[B,m,k] x [B,n,k]^T`
    /// when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return shape_err("bmm", format!("{:?} x {:?}", sa, sb));
        }
        let (bt, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != kb {
            return shape_err("bmm", format!("inner dimensions differ: {:?} x {:?} (trans_b={trans_b})", sa, sb));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); bt * m * n];
        for i in 0..bt {
            let am = MatRef::row_major(&ad[i * m * k..(i + 1) * m * k], m, k);
            let bm = if trans_b {
                MatRef::row_major(&bd[i * n * k..(i + 1) * n * k], n, k).t()
            } else {
                MatRef::row_major(&bd[i * k * n..(i + 1) * k * n], k, n)
            };
            gemm(T::one(), am, bm, T::zero(), &mut out[i * m * n..(i + 1) * m * n]);
        }
        let out = Tensor::new(&[bt, m, n], out)?;
        self.push("bmm", out, Op::Bmm { a, b, trans_b })
    }

    /// 2-d cross-correlation with zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let geom = Conv2dGeom::new(self.shape(x), self.shape(w), stride, padding)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.c_out] {
                return shape_err("conv2d", format!("bias {:?} for {} output channels", self.shape(b), geom.c_out));
            }
        }
        let data = conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let out = Tensor::new(&geom.out_shape(), data)?;
        self.push("conv2d", out, Op::Conv2d { x, w, b, geom })
    }

    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let geom = Pool2dGeom::new(self.shape(x), kernel, stride, padding)?;
        let (data, argmax) = maxpool2d_forward(self.value(x).data(), &geom);
        let out = Tensor::new(&[geom.n, geom.c, geom.ho, geom.wo], data)?;
        self.push("maxpool2d", out, Op::MaxPool2d { x, argmax })
    }

    /// Per-channel batch normalization of `[N,C,H,W]`.
    ///
    /// Training mode normalizes with biased batch statistics and returns the
    /// blended running statistics (the running variance uses the unbiased
    /// batch variance); inference mode normalizes with the running statistics.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: BatchNormState<'_, T>,
    ) -> Result<(Var, Option<RunningStats<T>>)> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return shape_err("batchnorm2d", format!("expected [N,C,H,W], got {:?}", s));
        }
        let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
        for (what, t) in [
            ("gamma", self.shape(gamma)),
            ("beta", self.shape(beta)),
            ("running_mean", state.running_mean.shape()),
            ("running_var", state.running_var.shape()),
        ] {
            if t != [c] {
                return shape_err("batchnorm2d", format!("{what} {:?} for {c} channels", t));
            }
        }
        let training = self.is_training();
        let count = n * hw;
        if training && count < 2 {
            return arg_err("batchnorm2d", format!("training mode needs >= 2 values per channel, got {count}"));
        }
        let eps = T::from_f64_lossy(state.eps);
        let xs = self.value(x).data();
        let (gs, bs) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        let mut inv_std = vec![T::zero(); c];
        let mut new_stats = training.then(|| (state.running_mean.clone(), state.running_var.clone()));
        for ch in 0..c {
            let (mean, var) = if training {
                let mut acc = T::zero();
                for i in 0..n {
                    acc = acc + xs[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter().copied().sum::<T>();
                }
                let mean = acc / T::from_count(count);
                let mut sq = T::zero();
                for i in 0..n {
                    for &v in &xs[(i * c + ch) * hw..(i * c + ch + 1) * hw] {
                        sq = sq + (v - mean) * (v - mean);
                    }
                }
                (mean, sq / T::from_count(count))
            } else {
                (state.running_mean.data()[ch], state.running_var.data()[ch])
            };
            let istd = T::one() / (var + eps).sqrt();
            inv_std[ch] = istd;
            for i in 0..n {
                let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                for j in r {
                    let xh = (xs[j] - mean) * istd;
                    xhat[j] = xh;
                    out[j] = gs[ch] * xh + bs[ch];
                }
            }
            if let Some((rm, rv)) = &mut new_stats {
                let mom = T::from_f64_lossy(state.momentum);
                let unbiased = var * T::from_count(count) / T::from_count(count - 1);
                rm.data_mut()[ch] = (T::one() - mom) * rm.data()[ch] + mom * mean;
                rv.data_mut()[ch] = (T::one() - mom) * rv.data()[ch] + mom * unbiased;
            }
        }
        let out = Tensor::new(&s, out)?;
        let v = self.push("batchnorm2d", out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, training })?;
        Ok((v, new_stats.map(|(mean, var)| RunningStats { mean, var })))
    }

    /// `gamma * (x - mu) / sqrt(var + eps) + beta` over the last axis, with
    /// the biased variance.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let Some(&d) = s.last() else {
            return shape_err("layernorm", "scalar input");
        };
        if d == 0 {
            return shape_err("layernorm", format!("last-axis extent 0 in {:?}", s));
        }
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return shape_err(
                "layernorm",
                format!("gamma {:?} / beta {:?} for last axis {d}", self.shape(gamma), self.shape(beta)),
            );
        }
        let eps = T::from_f64_lossy(eps);
        let xs = self.value(x).data();
        let (gs, bs) = (self.value(gamma).data(), self.value(beta).data());
        let rows = xs.len() / d;
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        let mut inv_std = vec![T::zero(); rows];
        let inv_d = T::one() / T::from_count(d);
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..d {
                let xh = (row[j] - mean) * istd;
                xhat[r * d + j] = xh;
                out[r * d + j] = gs[j] * xh + bs[j];
            }
        }
        let out = Tensor::new(&s, out)?;
        self.push("layernorm", out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return shape_err("softmax", format!("axis {axis} out of range for {:?}", s));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); xs.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let mx = (0..len).map(|l| xs[at(l)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for l in 0..len {
                    let e = (xs[at(l)] - mx).exp();
                    out[at(l)] = e;
                    z = z + e;
                }
                for l in 0..len {
                    out[at(l)] = out[at(l)] / z;
                }
            }
        }
        let out = Tensor::new(&s, out)?;
        self.push("softmax", out, Op::Softmax { x, axis })
    }

    /// `softmax(Q K^T / sqrt(d_k)) V` for `Q[N,n_q,d_k]`, `K[N,n_k,d_k]`,
    /// `V[N,n_k,d_v]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (sq, sk, sv) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        if sq.len() != 3 || sk.len() != 3 || sv.len() != 3 || sq[0] != sk[0] || sk[0] != sv[0] {
            return shape_err("attention", format!("Q {:?}, K {:?}, V {:?}", sq, sk, sv));
        }
        if sq[2] != sk[2] {
            return shape_err("attention", format!("d_k differs: Q {:?} vs K {:?}", sq, sk));
        }
        if sk[1] != sv[1] {
            return shape_err("attention", format!("n_k differs: K {:?} vs V {:?}", sk, sv));
        }
        let scores = self.bmm(q, k, true)?;
        let scaled = self.scale(scores, T::one() / T::from_count(sq[2]).sqrt())?;
        let probs = self.softmax(scaled, 2)?;
        if let Some(probe) = &mut self.attention_probe {
            probe.push(self.nodes[probs.0].value.clone());
        }
        self.bmm(probs, v, false)
    }

    /// Self-attention over `x[N,L,D]` with `heads` heads. `wq`, `wk`, `wv`
    /// are `[D,D]` with head `i` owning columns `i*D/h..(i+1)*D/h`; `wo` is
    /// `[D,D]` applied to the concatenated heads.
    pub fn multi_head_attention(&mut self, x: Var, wq: Var, wk: Var, wv: Var, wo: Var, heads: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return shape_err("multi_head_attention", format!("expected [N,L,D], got {:?}", s));
        }
        let (n, l, d) = (s[0], s[1], s[2]);
        if heads == 0 || d % heads != 0 {
            return arg_err("multi_head_attention", format!("D={d} not divisible by {heads} heads"));
        }
        let dh = d / heads;
        let split = |g: &mut Self, w: Var| -> Result<Var> {
            let p = g.linear(x, w, None)?;
            let p = g.reshape(p, &[n, l, heads, dh])?;
            let p = g.permute(p, &[0, 2, 1, 3])?;
            g.reshape(p, &[n * heads, l, dh])
        };
        let q = split(self, wq)?;
        let k = split(self, wk)?;
        let v = split(self, wv)?;
        let att = self.attention(q, k, v)?;
        let att = self.reshape(att, &[n, heads, l, dh])?;
        let att = self.permute(att, &[0, 2, 1, 3])?;
        let att = self.reshape(att, &[n, l, d])?;
        self.linear(att, wo, None)
    }

    /// `Dropout(Dropout(GELU(x W1 + b1)) W2 + b2)`.
    pub fn mlp_block(&mut self, x: Var, w1: Var, b1: Var, w2: Var, b2: Var, dropout: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&dropout) {
            return arg_err("mlp_block", format!("dropout rate {dropout} outside [0, 1)"));
        }
        let h = self.linear(x, w1, Some(b1))?;
        let h = self.gelu(h)?;
        let h = self.dropout(h, dropout)?;
        let o = self.linear(h, w2, Some(b2))?;
        self.dropout(o, dropout)
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return shape_err("cross_entropy", format!("logits {:?} for {} labels", s, labels.len()));
        }
        let (n, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return arg_err("cross_entropy", format!("label {bad} out of range for {k} classes"));
        }
        let zs = self.value(logits).data();
        let mut probs = vec![T::zero(); n * k];
        let mut loss = T::zero();
        for i in 0..n {
            let row = &zs[i * k..(i + 1) * k];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - mx).exp()).sum();
            let lse = mx + z.ln();
            loss = loss + (lse - row[labels[i]]);
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
        }
        let out = Tensor::scalar(loss / T::from_count(n));
        self.push("cross_entropy", out, Op::CrossEntropy { logits, labels: labels.to_vec(), probs })
    }
}
