//! Per-sample layer kernels: convolution via im2col, group normalization, dense.

use crate::nn::float::{matmul, Float};

/// Geometry of a square-kernel 2-D convolution over one CHW sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.patch_len()
    }
}

/// Unfold `x` (in_c×in_h×in_w) into `col` ((in_c·k·k)×(out_h·out_w)).
pub fn im2col<T: Float>(x: &[T], g: &ConvGeom, col: &mut Vec<T>) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let p = oh * ow;
    col.clear();
    col.resize(g.patch_len() * p, T::zero());
    for c in 0..g.in_c {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..][..g.in_w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            row[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Fold `col` back, accumulating into `dx`.
pub fn col2im<T: Float>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let p = oh * ow;
    for c in 0..g.in_c {
        let plane = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..][..g.in_w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward<T: Float>(x: &[T], g: &ConvGeom, weight: &[T], bias: Option<&[T]>, col: &mut Vec<T>) -> Vec<T> {
    im2col(x, g, col);
    let p = g.out_pixels();
    let mut out = vec![T::zero(); g.out_c * p];
    matmul(weight, col, &mut out, g.out_c, g.patch_len(), p, false, false, false);
    if let Some(b) = bias {
        for (o, &bv) in out.chunks_exact_mut(p).zip(b) {
            o.iter_mut().for_each(|v| *v += bv);
        }
    }
    out
}

/// Accumulates weight/bias gradients; returns the input gradient when `want_dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Float>(
    x: &[T],
    g: &ConvGeom,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    want_dx: bool,
    col: &mut Vec<T>,
) -> Option<Vec<T>> {
    im2col(x, g, col);
    let p = g.out_pixels();
    let patch = g.patch_len();
    matmul(dout, col, dweight, g.out_c, p, patch, false, true, true);
    if let Some(db) = dbias {
        for (d, row) in db.iter_mut().zip(dout.chunks_exact(p)) {
            *d += row.iter().copied().sum::<T>();
        }
    }
    if !want_dx {
        return None;
    }
    matmul(weight, dout, col, patch, g.out_c, p, true, false, false);
    let mut dx = vec![T::zero(); g.in_c * g.in_h * g.in_w];
    col2im(col, g, &mut dx);
    Some(dx)
}

pub const NORM_EPS: f64 = 1e-5;

/// Saved statistics of one group-norm application.
#[derive(Clone, Debug, Default)]
pub struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Group normalization over a channels×pixels sample with per-channel affine.
pub fn group_norm_forward<T: Float>(
    x: &[T],
    channels: usize,
    groups: usize,
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, NormCache<T>) {
    let p = x.len() / channels;
    let per = channels / groups * p;
    let m = T::of(per as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(groups);
    for gi in 0..groups {
        let xs = &x[gi * per..(gi + 1) * per];
        let mean = xs.iter().copied().sum::<T>() / m;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
        let is = T::one() / (var + T::of(NORM_EPS)).sqrt();
        inv_std.push(is);
        for (j, &v) in xs.iter().enumerate() {
            let idx = gi * per + j;
            let c = idx / p;
            let xh = (v - mean) * is;
            xhat[idx] = xh;
            y[idx] = gamma[c] * xh + beta[c];
        }
    }
    (y, NormCache { xhat, inv_std })
}

pub fn group_norm_backward<T: Float>(
    dy: &[T],
    channels: usize,
    groups: usize,
    gamma: &[T],
    cache: &NormCache<T>,
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let p = dy.len() / channels;
    let per = channels / groups * p;
    let m = T::of(per as f64);
    let mut dx = vec![T::zero(); dy.len()];
    for c in 0..channels {
        let (d, xh) = (&dy[c * p..(c + 1) * p], &cache.xhat[c * p..(c + 1) * p]);
        dgamma[c] += d.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
        dbeta[c] += d.iter().copied().sum::<T>();
    }
    for gi in 0..groups {
        let range = gi * per..(gi + 1) * per;
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for idx in range.clone() {
            let dxh = dy[idx] * gamma[idx / p];
            sum_d += dxh;
            sum_dx += dxh * cache.xhat[idx];
        }
        let is = cache.inv_std[gi];
        for idx in range {
            let dxh = dy[idx] * gamma[idx / p];
            dx[idx] = is / m * (m * dxh - sum_d - cache.xhat[idx] * sum_dx);
        }
    }
    dx
}

pub fn relu_inplace<T: Float>(x: &mut [T]) {
    x.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Zero gradient entries where the ReLU output was not positive.
pub fn relu_backward_inplace<T: Float>(dy: &mut [T], out: &[T]) {
    for (d, &o) in dy.iter_mut().zip(out) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

/// `Y (rows×out) = X (rows×in) · Wᵀ + b`.
pub fn dense_forward<T: Float>(x: &[T], rows: usize, weight: &[T], bias: &[T], out: usize) -> Vec<T> {
    let inp = x.len() / rows.max(1);
    let mut y = vec![T::zero(); rows * out];
    matmul(x, weight, &mut y, rows, inp, out, false, true, false);
    for r in y.chunks_exact_mut(out) {
        r.iter_mut().zip(bias).for_each(|(v, &b)| *v += b);
    }
    y
}

/// Accumulates parameter gradients and returns dX.
#[allow(clippy::too_many_arguments)]
pub fn dense_backward<T: Float>(
    x: &[T],
    rows: usize,
    weight: &[T],
    dy: &[T],
    out: usize,
    dweight: &mut [T],
    dbias: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    let inp = x.len() / rows.max(1);
    matmul(dy, x, dweight, out, rows, inp, true, false, true);
    for r in dy.chunks_exact(out) {
        dbias.iter_mut().zip(r).for_each(|(d, &v)| *d += v);
    }
    if !want_dx {
        return None;
    }
    let mut dx = vec![T::zero(); rows * inp];
    matmul(dy, weight, &mut dx, rows, out, inp, false, false, false);
    Some(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(x: &[f64], g: &ConvGeom, w: &[f64]) -> Vec<f64> {
        let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
        let mut out = vec![0.0; g.out_c * oh * ow];
        for o in 0..g.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = 0.0;
                    for c in 0..g.in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < g.in_h && (ix as usize) < g.in_w {
                                    s += x[(c * g.in_h + iy as usize) * g.in_w + ix as usize]
                                        * w[((o * g.in_c + c) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        for (stride, pad, kernel) in [(1, 1, 3), (2, 1, 3), (2, 0, 1), (1, 0, 3)] {
            let g = ConvGeom {
                in_c: 2,
                out_c: 3,
                kernel,
                stride,
                pad,
                in_h: 7,
                in_w: 6,
            };
            let x: Vec<f64> = (0..2 * 42).map(|i| (i as f64 * 0.7).sin()).collect();
            let w: Vec<f64> = (0..g.weight_len()).map(|i| (i as f64 * 1.3).cos()).collect();
            let mut col = Vec::new();
            let got = conv_forward(&x, &g, &w, None, &mut col);
            let want = direct_conv(&x, &g, &w);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeom {
            in_c: 2,
            out_c: 1,
            kernel: 3,
            stride: 2,
            pad: 1,
            in_h: 5,
            in_w: 5,
        };
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut col = Vec::new();
        im2col(&x, &g, &mut col);
        let c: Vec<f64> = (0..col.len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; 50];
        col2im(&c, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn group_norm_normalizes_groups() {
        let x: Vec<f64> = (0..4 * 6).map(|i| (i as f64 * 0.9).sin() * 3.0 + 1.0).collect();
        let gamma = vec![1.0; 4];
        let beta = vec![0.0; 4];
        let (y, _) = group_norm_forward(&x, 4, 2, &gamma, &beta);
        for g in y.chunks(12) {
            let mean = g.iter().sum::<f64>() / 12.0;
            let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}

/// Batch statistics kept for the backward pass of [`batch_norm_forward`].
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Normalize each feature over the `rows` of a row-major batch (biased variance).
pub fn batch_norm_forward<T: Float>(x: &[T], rows: usize, gamma: &[T], beta: &[T]) -> (Vec<T>, BatchNormCache<T>) {
    let f = gamma.len();
    let n = T::of(rows as f64);
    let mut mean = vec![T::zero(); f];
    for r in x.chunks_exact(f) {
        mean.iter_mut().zip(r).for_each(|(m, &v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![T::zero(); f];
    for r in x.chunks_exact(f) {
        for j in 0..f {
            let d = r[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v = *v / n);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(NORM_EPS)).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for (i, (&v, (xh, o))) in x.iter().zip(xhat.iter_mut().zip(y.iter_mut())).enumerate() {
        let j = i % f;
        *xh = (v - mean[j]) * inv_std[j];
        *o = gamma[j] * *xh + beta[j];
    }
    (y, BatchNormCache { xhat, inv_std, mean, var })
}

/// Normalize with fixed statistics (inference).
pub fn batch_norm_apply<T: Float>(x: &[T], mean: &[T], var: &[T], gamma: &[T], beta: &[T]) -> Vec<T> {
    let f = gamma.len();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let j = i % f;
            gamma[j] * (v - mean[j]) / (var[j] + T::of(NORM_EPS)).sqrt() + beta[j]
        })
        .collect()
}

/// Accumulates dγ, dβ and returns dX.
pub fn batch_norm_backward<T: Float>(
    dy: &[T],
    rows: usize,
    gamma: &[T],
    cache: &BatchNormCache<T>,
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let f = gamma.len();
    let n = T::of(rows as f64);
    let mut sum_d = vec![T::zero(); f];
    let mut sum_dx = vec![T::zero(); f];
    for (i, (&d, &xh)) in dy.iter().zip(&cache.xhat).enumerate() {
        let j = i % f;
        dgamma[j] += d * xh;
        dbeta[j] += d;
        let dxh = d * gamma[j];
        sum_d[j] += dxh;
        sum_dx[j] += dxh * xh;
    }
    dy.iter()
        .zip(&cache.xhat)
        .enumerate()
        .map(|(i, (&d, &xh))| {
            let j = i % f;
            cache.inv_std[j] * (d * gamma[j] - sum_d[j] / n - xh * sum_dx[j] / n)
        })
        .collect()
}
