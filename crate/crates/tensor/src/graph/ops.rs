use rand::Rng;

use super::{Graph, Op, Var};
use crate::error::{arg_err, shape_err, Result};
use crate::kernels::{axis_split, for_each_strided};
use crate::scalar::Scalar;
use crate::tensor::{numel, strides, Tensor};

impl<T: Scalar> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return shape_err("add", format!("{:?} vs {:?}", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(va.shape(), data)?;
        self.push("add", out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return shape_err("mul", format!("{:?} vs {:?}", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(va.shape(), data)?;
        self.push("mul", out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.value(x).map(|v| v * c);
        self.push("scale", out, Op::Scale(x, c))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push("sum", out, Op::Sum(x))
    }

    /// Mean along `axis`, removing it.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return shape_err("mean_axis", format!("axis {axis} out of range for {:?}", shape));
        }
        if shape[axis] == 0 {
            return shape_err("mean_axis", format!("cannot average an empty axis of {:?}", shape));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let xs = self.value(x).data();
        let inv = T::one() / T::from_count(len);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = T::zero();
                for l in 0..len {
                    acc = acc + xs[(o * len + l) * inner + i];
                }
                out[o * inner + i] = acc * inv;
            }
        }
        let mut oshape = shape.clone();
        oshape.remove(axis);
        let out = Tensor::new(&oshape, out)?;
        self.push("mean_axis", out, Op::MeanAxis { x, axis })
    }

    /// Mean over the two trailing spatial axes: `[N,C,h,w] -> [N,C]`.
    pub fn reduce_mean_spatial(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return shape_err("reduce_mean_spatial", format!("expected [N,C,h,w], got {:?}", s));
        }
        if s[2] * s[3] == 0 {
            return shape_err("reduce_mean_spatial", format!("empty spatial extent in {:?}", s));
        }
        let flat = self.reshape(x, &[s[0], s[1], s[2] * s[3]])?;
        self.mean_axis(flat, 2)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if numel(shape) != v.len() {
            return shape_err("reshape", format!("cannot view {:?} as {:?}", v.shape(), shape));
        }
        let out = v.clone().reshape(shape)?;
        self.push("reshape", out, Op::Reshape(x))
    }

    /// Removes an axis of extent 1.
    pub fn squeeze(&mut self, x: Var, axis: usize) -> Result<Var> {
        let mut s = self.shape(x).to_vec();
        if axis >= s.len() || s[axis] != 1 {
            return shape_err("squeeze", format!("axis {axis} of {:?} is not of extent 1", s));
        }
        s.remove(axis);
        self.reshape(x, &s)
    }

    /// Inserts an axis of extent 1 at `axis`.
    pub fn unsqueeze(&mut self, x: Var, axis: usize) -> Result<Var> {
        let mut s = self.shape(x).to_vec();
        if axis > s.len() {
            return shape_err("unsqueeze", format!("axis {axis} out of range for {:?}", s));
        }
        s.insert(axis, 1);
        self.reshape(x, &s)
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut seen = vec![false; s.len()];
        if perm.len() != s.len() || perm.iter().any(|&p| p >= s.len() || std::mem::replace(&mut seen[p], true)) {
            return shape_err("permute", format!("{:?} is not a permutation of the axes of {:?}", perm, s));
        }
        let st = strides(&s);
        let out_shape: Vec<usize> = perm.iter().map(|&p| s[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); xs.len()];
        for_each_strided(&out_shape, &src_strides, |o, si| out[o] = xs[si]);
        let out = Tensor::new(&out_shape, out)?;
        self.push("permute", out, Op::Permute { x, perm: perm.to_vec() })
    }

    /// Broadcasts extents of 1 up to `target` (same rank).
    pub fn expand(&mut self, x: Var, target: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != target.len() || s.iter().zip(target).any(|(&a, &b)| a != b && a != 1) {
            return shape_err("expand", format!("cannot expand {:?} to {:?}", s, target));
        }
        let src_strides = broadcast_strides(&s, target);
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); numel(target)];
        for_each_strided(target, &src_strides, |o, si| out[o] = xs[si]);
        let out = Tensor::new(target, out)?;
        self.push("expand", out, Op::Expand { x })
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return arg_err("concat", "empty input list");
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return shape_err("concat", format!("axis {axis} out of range for {:?}", base));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let agrees = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !agrees {
                return shape_err("concat", format!("{:?} does not match {:?} off axis {axis}", s, base));
            }
            total += s[axis];
        }
        let mut oshape = base.clone();
        oshape[axis] = total;
        let (outer, _, inner) = axis_split(&oshape, axis);
        let mut out = Vec::with_capacity(numel(&oshape));
        for o in 0..outer {
            for &v in xs {
                let len = self.shape(v)[axis];
                let d = self.value(v).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let out = Tensor::new(&oshape, out)?;
        self.push("concat", out, Op::Concat { xs: xs.to_vec(), axis })
    }

    /// Picks position `index` along `axis`, removing the axis.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || index >= s[axis] {
            return shape_err("select", format!("index {index} on axis {axis} out of range for {:?}", s));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            out.extend_from_slice(&xs[(o * len + index) * inner..(o * len + index + 1) * inner]);
        }
        let mut oshape = s;
        oshape.remove(axis);
        let out = Tensor::new(&oshape, out)?;
        self.push("select", out, Op::Select { x, axis, index })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push("relu", out, Op::Relu(x))
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(gelu_scalar);
        self.push("gelu", out, Op::Gelu(x))
    }

    /// Inverted dropout; the identity outside training mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return arg_err("dropout", format!("rate {rate} outside [0, 1)"));
        }
        if !self.is_training() || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::from_f64_lossy(1.0 / (1.0 - rate));
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| if self.rng().random::<f64>() < rate { T::zero() } else { keep_scale })
            .collect();
        let xs = self.value(x);
        let out = Tensor::new(xs.shape(), xs.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect())?;
        self.push("dropout", out, Op::Dropout { x, mask })
    }
}

pub(crate) fn gelu_scalar<T: Scalar>(v: T) -> T {
    let half = T::from_f64_lossy(0.5);
    v * half * (T::one() + (v * T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub(crate) fn gelu_grad_scalar<T: Scalar>(v: T) -> T {
    let x = v.as_f64();
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    T::from_f64_lossy(cdf + x * pdf)
}

/// Source strides for broadcasting `from` to `to` (stride 0 on broadcast axes).
pub(crate) fn broadcast_strides(from: &[usize], to: &[usize]) -> Vec<usize> {
    let st = strides(from);
    from.iter().zip(to).zip(st).map(|((&a, &b), s)| if a == 1 && b != 1 { 0 } else { s }).collect()
}
