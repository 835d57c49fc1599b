//! Slice-level kernels shared by the graph's forward and backward passes.

use crate::error::{arg_err, shape_err, Result};
use crate::scalar::{gemm, MatRef, Scalar};

/// Output extent of a sliding window: `floor((n + 2p - k) / s) + 1`.
pub fn window_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || k == 0 || n + 2 * pad < k {
        return None;
    }
    Some((n + 2 * pad - k) / stride + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Conv2dGeom {
    pub fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 || w.len() != 4 {
            return shape_err("conv2d", format!("expected 4-d input and kernel, got {:?} and {:?}", x, w));
        }
        if x[1] != w[1] {
            return shape_err(
                "conv2d",
                format!("input has {} channels but kernel {:?} expects {}", x[1], w, w[1]),
            );
        }
        if stride == 0 {
            return arg_err("conv2d", "stride must be >= 1");
        }
        let ho = window_out_extent(x[2], w[2], stride, pad);
        let wo = window_out_extent(x[3], w[3], stride, pad);
        let (Some(ho), Some(wo)) = (ho, wo) else {
            return shape_err(
                "conv2d",
                format!("non-positive output extent for input {:?}, kernel {:?}, stride {stride}, padding {pad}", x, w),
            );
        };
        Ok(Conv2dGeom {
            n: x[0],
            c_in: x[1],
            h: x[2],
            w: x[3],
            c_out: w[0],
            kh: w[2],
            kw: w[3],
            stride,
            pad,
            ho,
            wo,
        })
    }

    pub fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn p(&self) -> usize {
        self.ho * self.wo
    }

    pub fn np(&self) -> usize {
        self.n * self.p()
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.c_out, self.ho, self.wo]
    }

    /// Visits every (column row, column offset, input offset) triple that maps a
    /// real (non-padding) input cell into the im2col matrix.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (p, np) = (self.p(), self.np());
        for c in 0..self.c_in {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    for n in 0..self.n {
                        let xbase = (n * self.c_in + c) * self.h * self.w;
                        for oy in 0..self.ho {
                            let iy = (oy * self.stride + i) as isize - self.pad as isize;
                            if iy < 0 || iy as usize >= self.h {
                                continue;
                            }
                            let xrow = xbase + iy as usize * self.w;
                            let crow = row * np + n * p + oy * self.wo;
                            for ox in 0..self.wo {
                                let ix = (ox * self.stride + j) as isize - self.pad as isize;
                                if ix < 0 || ix as usize >= self.w {
                                    continue;
                                }
                                f(crow + ox, xrow + ix as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Unfolds `x` into a `[K, N*P]` column matrix (zero padding).
pub fn im2col<T: Scalar>(x: &[T], g: &Conv2dGeom) -> Vec<T> {
    let mut cols = vec![T::zero(); g.k() * g.np()];
    g.for_each_tap(|ci, xi| cols[ci] = x[xi]);
    cols
}

/// Folds a `[K, N*P]` column matrix back, accumulating into `dx`.
pub fn col2im<T: Scalar>(cols: &[T], g: &Conv2dGeom, dx: &mut [T]) {
    g.for_each_tap(|ci, xi| dx[xi] = dx[xi] + cols[ci]);
}

pub fn conv2d_forward<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, g: &Conv2dGeom) -> Vec<T> {
    let (p, np, k) = (g.p(), g.np(), g.k());
    let cols = im2col(x, g);
    let mut out_mat = vec![T::zero(); g.c_out * np];
    gemm(
        T::one(),
        MatRef::row_major(w, g.c_out, k),
        MatRef::row_major(&cols, k, np),
        T::zero(),
        &mut out_mat,
    );
    let mut out = vec![T::zero(); g.n * g.c_out * p];
    for co in 0..g.c_out {
        let bias = b.map_or(T::zero(), |b| b[co]);
        for n in 0..g.n {
            let src = &out_mat[co * np + n * p..co * np + (n + 1) * p];
            let dst = &mut out[(n * g.c_out + co) * p..(n * g.c_out + co + 1) * p];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + bias;
            }
        }
    }
    out
}

pub struct Conv2dGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    gout: &[T],
    g: &Conv2dGeom,
    need: (bool, bool, bool),
) -> Conv2dGrads<T> {
    let (p, np, k) = (g.p(), g.np(), g.k());
    let mut dy = vec![T::zero(); g.c_out * np];
    for n in 0..g.n {
        for co in 0..g.c_out {
            dy[co * np + n * p..co * np + (n + 1) * p]
                .copy_from_slice(&gout[(n * g.c_out + co) * p..(n * g.c_out + co + 1) * p]);
        }
    }
    let dy_mat = MatRef::row_major(&dy, g.c_out, np);
    let dw = need.1.then(|| {
        let cols = im2col(x, g);
        let mut dw = vec![T::zero(); g.c_out * k];
        gemm(T::one(), dy_mat, MatRef::row_major(&cols, k, np).t(), T::zero(), &mut dw);
        dw
    });
    let dx = need.0.then(|| {
        let mut dcols = vec![T::zero(); k * np];
        gemm(T::one(), MatRef::row_major(w, g.c_out, k).t(), dy_mat, T::zero(), &mut dcols);
        let mut dx = vec![T::zero(); x.len()];
        col2im(&dcols, g, &mut dx);
        dx
    });
    let db = need.2.then(|| (0..g.c_out).map(|co| dy[co * np..(co + 1) * np].iter().copied().sum()).collect());
    Conv2dGrads { dx, dw, db }
}

#[derive(Debug, Clone, Copy)]
pub struct Pool2dGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Pool2dGeom {
    pub fn new(x: &[usize], k: usize, stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 {
            return shape_err("maxpool2d", format!("expected 4-d input, got {:?}", x));
        }
        if k == 0 || stride == 0 {
            return arg_err("maxpool2d", "kernel and stride must be >= 1");
        }
        if 2 * pad > k {
            return arg_err("maxpool2d", format!("padding {pad} exceeds half the kernel {k}"));
        }
        let (Some(ho), Some(wo)) = (window_out_extent(x[2], k, stride, pad), window_out_extent(x[3], k, stride, pad))
        else {
            return shape_err(
                "maxpool2d",
                format!("non-positive output extent for input {:?}, kernel {k}, stride {stride}, padding {pad}", x),
            );
        };
        Ok(Pool2dGeom { n: x[0], c: x[1], h: x[2], w: x[3], k, stride, pad, ho, wo })
    }
}

/// Max pooling; returns the pooled values and, per output, the flat input
/// index of the first maximal cell. Padding never wins.
pub fn maxpool2d_forward<T: Scalar>(x: &[T], g: &Pool2dGeom) -> (Vec<T>, Vec<usize>) {
    let total = g.n * g.c * g.ho * g.wo;
    let mut out = Vec::with_capacity(total);
    let mut arg = Vec::with_capacity(total);
    for plane in 0..g.n * g.c {
        let base = plane * g.h * g.w;
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let mut best = T::neg_infinity();
                let mut best_i = usize::MAX;
                for i in 0..g.k {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for j in 0..g.k {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        if ix < 0 || ix as usize >= g.w {
                            continue;
                        }
                        let idx = base + iy as usize * g.w + ix as usize;
                        if best_i == usize::MAX || x[idx] > best {
                            best = x[idx];
                            best_i = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

/// Iterates over `(outer, inner)` lanes of length `len` along one axis.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// Maps output positions to source positions through per-output-axis source
/// strides, calling `f(out_index, src_index)`.
pub fn for_each_strided(out_shape: &[usize], src_strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let total: usize = out_shape.iter().product();
    if total == 0 {
        return;
    }
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for o in 0..total {
        f(o, src);
        for d in (0..rank).rev() {
            idx[d] += 1;
            src += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            src -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_extents() {
        assert_eq!(window_out_extent(32, 7, 2, 4), Some(17));
        assert_eq!(window_out_extent(17, 3, 2, 1), Some(9));
        assert_eq!(window_out_extent(9, 3, 2, 1), Some(5));
        assert_eq!(window_out_extent(3, 3, 2, 1), Some(2));
        assert_eq!(window_out_extent(2, 5, 1, 1), None);
        assert_eq!(window_out_extent(4, 3, 0, 0), None);
    }

    #[test]
    fn pool_geometry_rejects_oversized_padding() {
        assert!(Pool2dGeom::new(&[1, 1, 5, 5], 3, 2, 2).is_err());
        assert!(Pool2dGeom::new(&[1, 1, 5, 5], 3, 2, 1).is_ok());
        assert!(Pool2dGeom::new(&[1, 5, 5], 3, 2, 1).is_err());
    }

    #[test]
    fn strided_walk_visits_broadcast_offsets() {
        let mut seen = Vec::new();
        for_each_strided(&[2, 3], &[1, 0], |o, s| seen.push((o, s)));
        assert_eq!(seen, vec![(0, 0), (1, 0), (2, 0), (3, 1), (4, 1), (5, 1)]);
    }
}
