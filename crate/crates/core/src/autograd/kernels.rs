//! Forward and backward kernels on `(N, C, H, W)` tensors.
//!
//! Kernels are plain functions; the tape in [`super::ops`] wires them into
//! reverse-mode differentiation. All reductions run in a fixed order so
//! results are bit-reproducible.

use crate::scalar::{gemm, MatLayout, Scalar};
use crate::tensor::Tensor;

/// Upper bound on im2col buffer entries per tile.
const COL_BUDGET: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeom {
    pub fn same(k: usize) -> Self {
        Self { kernel: (k, k), stride: 1, padding: k / 2, dilation: 1 }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let o = |x: usize, k: usize| {
            let span = self.dilation * (k - 1) + 1;
            let padded = x + 2 * self.padding;
            assert!(padded >= span, "convolution kernel larger than padded input");
            (padded - span) / self.stride + 1
        };
        (o(h, self.kernel.0), o(w, self.kernel.1))
    }
}

struct ColTile {
    start: usize,
    len: usize,
    // per position: (sample, top-left input row, top-left input col)
    origins: Vec<(usize, isize, isize)>,
}

fn tiles(total: usize, rows: usize, ho: usize, wo: usize, g: &ConvGeom) -> Vec<ColTile> {
    let per = (COL_BUDGET / rows.max(1)).clamp(1, total.max(1));
    let mut out = Vec::new();
    let mut start = 0;
    while start < total {
        let len = per.min(total - start);
        let origins = (start..start + len)
            .map(|p| {
                let n = p / (ho * wo);
                let r = p % (ho * wo);
                let (oy, ox) = (r / wo, r % wo);
                (n, (oy * g.stride) as isize - g.padding as isize, (ox * g.stride) as isize - g.padding as isize)
            })
            .collect();
        out.push(ColTile { start, len, origins });
        start += len;
    }
    out
}

fn im2col<T: Scalar>(x: &[T], (ci, h, w): (usize, usize, usize), g: &ConvGeom, tile: &ColTile, cols: &mut [T]) {
    let (kh, kw) = g.kernel;
    let d = g.dilation as isize;
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst = &mut cols[row * tile.len..(row + 1) * tile.len];
                for (slot, &(n, y0, x0)) in dst.iter_mut().zip(&tile.origins) {
                    let iy = y0 + ky as isize * d;
                    let ix = x0 + kx as isize * d;
                    *slot = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        x[((n * ci + c) * h + iy as usize) * w + ix as usize]
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], (ci, h, w): (usize, usize, usize), g: &ConvGeom, tile: &ColTile, dx: &mut [T]) {
    let (kh, kw) = g.kernel;
    let d = g.dilation as isize;
    for c in 0..ci {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let src = &cols[row * tile.len..(row + 1) * tile.len];
                for (&v, &(n, y0, x0)) in src.iter().zip(&tile.origins) {
                    let iy = y0 + ky as isize * d;
                    let ix = x0 + kx as isize * d;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        dx[((n * ci + c) * h + iy as usize) * w + ix as usize] += v;
                    }
                }
            }
        }
    }
}

/// `x (N, Ci, H, W)`, `weight (Co, Ci, kh, kw)` → `(N, Co, Ho, Wo)`.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>, g: &ConvGeom) -> Tensor<T> {
    let (n, ci, h, w) = x.dims4();
    let (co, wci, kh, kw) = weight.dims4();
    assert_eq!(ci, wci, "conv input channels");
    assert_eq!((kh, kw), g.kernel, "conv kernel shape");
    let (ho, wo) = g.out_size(h, w);
    let rows = ci * kh * kw;
    let hw = ho * wo;
    let mut out = Tensor::zeros(&[n, co, ho, wo]);
    let mut cols = Vec::new();
    let mut acc = Vec::new();
    for tile in tiles(n * hw, rows, ho, wo, g) {
        cols.resize(rows * tile.len, T::zero());
        acc.resize(co * tile.len, T::zero());
        im2col(x.data(), (ci, h, w), g, &tile, &mut cols);
        gemm(
            weight.data(),
            MatLayout::row_major(co, rows),
            &cols,
            MatLayout::row_major(rows, tile.len),
            T::zero(),
            &mut acc,
            MatLayout::row_major(co, tile.len),
        );
        let dst = out.data_mut();
        for oc in 0..co {
            let b = bias.map_or(T::zero(), |b| b.data()[oc]);
            for (i, &v) in acc[oc * tile.len..(oc + 1) * tile.len].iter().enumerate() {
                let p = tile.start + i;
                dst[((p / hw) * co + oc) * hw + p % hw] = v + b;
            }
        }
    }
    out
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dweight: Tensor<T>,
    pub dbias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dout: &Tensor<T>,
    g: &ConvGeom,
    need_dx: bool,
) -> ConvGrads<T> {
    let (n, ci, h, w) = x.dims4();
    let (co, _, kh, kw) = weight.dims4();
    let (_, _, ho, wo) = dout.dims4();
    let rows = ci * kh * kw;
    let hw = ho * wo;
    let mut dweight = Tensor::zeros(weight.shape());
    let mut dbias = Tensor::zeros(&[co]);
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    let mut cols = Vec::new();
    let mut dcols = Vec::new();
    let mut dtile = Vec::new();
    let dsrc = dout.data();
    for tile in tiles(n * hw, rows, ho, wo, g) {
        dtile.resize(co * tile.len, T::zero());
        for oc in 0..co {
            for (i, slot) in dtile[oc * tile.len..(oc + 1) * tile.len].iter_mut().enumerate() {
                let p = tile.start + i;
                *slot = dsrc[((p / hw) * co + oc) * hw + p % hw];
            }
        }
        for oc in 0..co {
            let s: T = dtile[oc * tile.len..(oc + 1) * tile.len].iter().copied().sum();
            dbias.data_mut()[oc] += s;
        }
        cols.resize(rows * tile.len, T::zero());
        im2col(x.data(), (ci, h, w), g, &tile, &mut cols);
        gemm(
            &dtile,
            MatLayout::row_major(co, tile.len),
            &cols,
            MatLayout::row_major(rows, tile.len).t(),
            T::one(),
            dweight.data_mut(),
            MatLayout::row_major(co, rows),
        );
        if let Some(dx) = dx.as_mut() {
            dcols.resize(rows * tile.len, T::zero());
            gemm(
                weight.data(),
                MatLayout::row_major(co, rows).t(),
                &dtile,
                MatLayout::row_major(co, tile.len),
                T::zero(),
                &mut dcols,
                MatLayout::row_major(rows, tile.len),
            );
            col2im(&dcols, (ci, h, w), g, &tile, dx.data_mut());
        }
    }
    ConvGrads { dx, dweight, dbias }
}

/// 2×2, stride-2 transposed convolution. `weight (Ci, Co, 2, 2)`.
pub fn conv_transpose2x2_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Tensor<T> {
    let (n, ci, h, w) = x.dims4();
    let (wci, co, kh, kw) = weight.dims4();
    assert_eq!((wci, kh, kw), (ci, 2, 2), "transposed conv weight shape");
    let hw = h * w;
    let mut out = Tensor::zeros(&[n, co, 2 * h, 2 * w]);
    let mut y = vec![T::zero(); co * 4 * hw];
    for s in 0..n {
        let xs = &x.data()[s * ci * hw..(s + 1) * ci * hw];
        gemm(
            weight.data(),
            MatLayout::row_major(ci, co * 4).t(),
            xs,
            MatLayout::row_major(ci, hw),
            T::zero(),
            &mut y,
            MatLayout::row_major(co * 4, hw),
        );
        let dst = out.data_mut();
        for oc in 0..co {
            let b = bias.map_or(T::zero(), |b| b.data()[oc]);
            for a in 0..2 {
                for bb in 0..2 {
                    let row = &y[((oc * 2 + a) * 2 + bb) * hw..((oc * 2 + a) * 2 + bb + 1) * hw];
                    for i in 0..h {
                        for j in 0..w {
                            dst[((s * co + oc) * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb] = row[i * w + j] + b;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv_transpose2x2_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dout: &Tensor<T>,
    need_dx: bool,
) -> ConvGrads<T> {
    let (n, ci, h, w) = x.dims4();
    let (_, co, _, _) = weight.dims4();
    let hw = h * w;
    let mut dweight = Tensor::zeros(weight.shape());
    let mut dbias = Tensor::zeros(&[co]);
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    let mut dy = vec![T::zero(); co * 4 * hw];
    let dsrc = dout.data();
    for s in 0..n {
        for oc in 0..co {
            for a in 0..2 {
                for bb in 0..2 {
                    let row = &mut dy[((oc * 2 + a) * 2 + bb) * hw..((oc * 2 + a) * 2 + bb + 1) * hw];
                    for i in 0..h {
                        for j in 0..w {
                            row[i * w + j] = dsrc[((s * co + oc) * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb];
                        }
                    }
                }
            }
            let total: T = dy[oc * 4 * hw..(oc + 1) * 4 * hw].iter().copied().sum();
            dbias.data_mut()[oc] += total;
        }
        let xs = &x.data()[s * ci * hw..(s + 1) * ci * hw];
        gemm(
            xs,
            MatLayout::row_major(ci, hw),
            &dy,
            MatLayout::row_major(co * 4, hw).t(),
            T::one(),
            dweight.data_mut(),
            MatLayout::row_major(ci, co * 4),
        );
        if let Some(dx) = dx.as_mut() {
            gemm(
                weight.data(),
                MatLayout::row_major(ci, co * 4),
                &dy,
                MatLayout::row_major(co * 4, hw),
                T::zero(),
                &mut dx.data_mut()[s * ci * hw..(s + 1) * ci * hw],
                MatLayout::row_major(ci, hw),
            );
        }
    }
    ConvGrads { dx, dweight, dbias }
}

/// 2×2 max pooling with stride 2; odd trailing rows/cols are dropped.
/// Returns the pooled tensor and the flat argmax index of each output.
pub fn max_pool2x2_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (n, c, h, w) = x.dims4();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let mut arg = vec![0usize; n * c * ho * wo];
    let src = x.data();
    let dst = out.data_mut();
    for p in 0..n * c {
        for i in 0..ho {
            for j in 0..wo {
                let mut best = (p * h + 2 * i) * w + 2 * j;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (p * h + 2 * i + dy) * w + 2 * j + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = (p * ho + i) * wo + j;
                dst[o] = src[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

/// Per-axis linear interpolation taps, half-pixel centres (no corner alignment).
fn linear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

pub fn resize_bilinear_forward<T: Scalar>(x: &Tensor<T>, (oh, ow): (usize, usize)) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let ty = linear_taps(h, oh);
    let tx = linear_taps(w, ow);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for p in 0..n * c {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for (i, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = T::lit(ly);
            for (j, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = T::lit(lx);
                let top = plane[y0 * w + x0] * (T::one() - lx) + plane[y0 * w + x1] * lx;
                let bot = plane[y1 * w + x0] * (T::one() - lx) + plane[y1 * w + x1] * lx;
                dst[(p * oh + i) * ow + j] = top * (T::one() - ly) + bot * ly;
            }
        }
    }
    out
}

pub fn resize_bilinear_backward<T: Scalar>(dout: &Tensor<T>, (h, w): (usize, usize)) -> Tensor<T> {
    let (n, c, oh, ow) = dout.dims4();
    let ty = linear_taps(h, oh);
    let tx = linear_taps(w, ow);
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    let src = dout.data();
    let dst = dx.data_mut();
    for p in 0..n * c {
        let plane = &mut dst[p * h * w..(p + 1) * h * w];
        for (i, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = T::lit(ly);
            for (j, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = T::lit(lx);
                let g = src[(p * oh + i) * ow + j];
                plane[y0 * w + x0] += g * (T::one() - ly) * (T::one() - lx);
                plane[y0 * w + x1] += g * (T::one() - ly) * lx;
                plane[y1 * w + x0] += g * ly * (T::one() - lx);
                plane[y1 * w + x1] += g * ly * lx;
            }
        }
    }
    dx
}

/// Bin boundaries of adaptive pooling: `[floor(i·n/b), ceil((i+1)·n/b))`.
pub fn adaptive_bins(n: usize, bins: usize) -> Vec<(usize, usize)> {
    (0..bins).map(|i| (i * n / bins, ((i + 1) * n).div_ceil(bins))).collect()
}

pub fn adaptive_avg_pool_forward<T: Scalar>(x: &Tensor<T>, bins: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let by = adaptive_bins(h, bins);
    let bx = adaptive_bins(w, bins);
    let mut out = Tensor::zeros(&[n, c, bins, bins]);
    let src = x.data();
    let dst = out.data_mut();
    for p in 0..n * c {
        for (i, &(y0, y1)) in by.iter().enumerate() {
            for (j, &(x0, x1)) in bx.iter().enumerate() {
                let mut s = T::zero();
                for y in y0..y1 {
                    for xx in x0..x1 {
                        s += src[(p * h + y) * w + xx];
                    }
                }
                dst[(p * bins + i) * bins + j] = s / T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
            }
        }
    }
    out
}

pub fn adaptive_avg_pool_backward<T: Scalar>(dout: &Tensor<T>, (h, w): (usize, usize)) -> Tensor<T> {
    let (n, c, bins, _) = dout.dims4();
    let by = adaptive_bins(h, bins);
    let bx = adaptive_bins(w, bins);
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    let src = dout.data();
    let dst = dx.data_mut();
    for p in 0..n * c {
        for (i, &(y0, y1)) in by.iter().enumerate() {
            for (j, &(x0, x1)) in bx.iter().enumerate() {
                let g = src[(p * bins + i) * bins + j] / T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                for y in y0..y1 {
                    for xx in x0..x1 {
                        dst[(p * h + y) * w + xx] += g;
                    }
                }
            }
        }
    }
    dx
}

/// Axes of an `(N, C, H, W)` tensor reduced by a pooling op.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAxes {
    /// Over H and W → `(N, C, 1, 1)`.
    Spatial,
    /// Over C → `(N, 1, H, W)`.
    Channel,
    /// Over W → `(N, C, H, 1)`.
    Width,
    /// Over H → `(N, C, 1, W)`.
    Height,
}

impl PoolAxes {
    fn out_shape(self, (n, c, h, w): (usize, usize, usize, usize)) -> [usize; 4] {
        match self {
            PoolAxes::Spatial => [n, c, 1, 1],
            PoolAxes::Channel => [n, 1, h, w],
            PoolAxes::Width => [n, c, h, 1],
            PoolAxes::Height => [n, c, 1, w],
        }
    }

    fn target(self, (_, c, h, w): (usize, usize, usize, usize), (s, ch, y, x): (usize, usize, usize, usize)) -> usize {
        match self {
            PoolAxes::Spatial => s * c + ch,
            PoolAxes::Channel => (s * h + y) * w + x,
            PoolAxes::Width => (s * c + ch) * h + y,
            PoolAxes::Height => (s * c + ch) * w + x,
        }
    }

    fn count(self, (_, c, h, w): (usize, usize, usize, usize)) -> usize {
        match self {
            PoolAxes::Spatial => h * w,
            PoolAxes::Channel => c,
            PoolAxes::Width => w,
            PoolAxes::Height => h,
        }
    }
}

fn for_each_index(dims: (usize, usize, usize, usize), mut f: impl FnMut(usize, (usize, usize, usize, usize))) {
    let (n, c, h, w) = dims;
    let mut flat = 0;
    for s in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    f(flat, (s, ch, y, x));
                    flat += 1;
                }
            }
        }
    }
}

pub fn mean_pool_forward<T: Scalar>(x: &Tensor<T>, axes: PoolAxes) -> Tensor<T> {
    let dims = x.dims4();
    let mut out = Tensor::zeros(&axes.out_shape(dims));
    let src = x.data();
    let dst = out.data_mut();
    for_each_index(dims, |flat, idx| dst[axes.target(dims, idx)] += src[flat]);
    let inv = T::one() / T::from_usize(axes.count(dims)).unwrap();
    for v in dst.iter_mut() {
        *v *= inv;
    }
    out
}

pub fn mean_pool_backward<T: Scalar>(dout: &Tensor<T>, in_shape: &[usize], axes: PoolAxes) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let dims = dx.dims4();
    let inv = T::one() / T::from_usize(axes.count(dims)).unwrap();
    let g = dout.data();
    let dst = dx.data_mut();
    for_each_index(dims, |flat, idx| dst[flat] = g[axes.target(dims, idx)] * inv);
    dx
}

/// Max pooling over `axes`; returns values and flat argmax indices (first max wins).
pub fn max_pool_axes_forward<T: Scalar>(x: &Tensor<T>, axes: PoolAxes) -> (Tensor<T>, Vec<usize>) {
    let dims = x.dims4();
    let shape = axes.out_shape(dims);
    let mut out = Tensor::full(&shape, T::neg_infinity());
    let mut arg = vec![usize::MAX; out.len()];
    let src = x.data();
    let dst = out.data_mut();
    for_each_index(dims, |flat, idx| {
        let t = axes.target(dims, idx);
        if arg[t] == usize::MAX || src[flat] > dst[t] {
            dst[t] = src[flat];
            arg[t] = flat;
        }
    });
    (out, arg)
}

/// Scatter of pooled gradients back to their argmax positions.
pub fn scatter_argmax<T: Scalar>(dout: &Tensor<T>, arg: &[usize], in_shape: &[usize]) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let dst = dx.data_mut();
    for (&g, &i) in dout.data().iter().zip(arg) {
        dst[i] += g;
    }
    dx
}

/// Flat index into `b` for every element of `a`'s shape when `b` broadcasts to it.
pub fn broadcast_index(a_shape: &[usize], b_shape: &[usize]) -> Vec<usize> {
    assert_eq!(a_shape.len(), b_shape.len(), "broadcast rank");
    for (&a, &b) in a_shape.iter().zip(b_shape) {
        assert!(b == a || b == 1, "cannot broadcast {b_shape:?} to {a_shape:?}");
    }
    let rank = a_shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        strides[d] = if b_shape[d] == 1 { 0 } else { acc };
        acc *= b_shape[d];
    }
    let total: usize = a_shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        out.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < a_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], f: impl Fn(usize) -> f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(f).collect()).unwrap()
    }

    fn naive_conv(x: &Tensor<f64>, wt: &Tensor<f64>, b: &Tensor<f64>, g: &ConvGeom) -> Tensor<f64> {
        let (n, ci, h, w) = x.dims4();
        let (co, _, kh, kw) = wt.dims4();
        let (ho, wo) = g.out_size(h, w);
        let mut out = Tensor::zeros(&[n, co, ho, wo]);
        let mut k = 0;
        for s in 0..n {
            for o in 0..co {
                for y in 0..ho {
                    for xx in 0..wo {
                        let mut acc = b.data()[o];
                        for c in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (y * g.stride + ky * g.dilation) as isize - g.padding as isize;
                                    let ix = (xx * g.stride + kx * g.dilation) as isize - g.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += x.at4(s, c, iy as usize, ix as usize) * wt.at4(o, c, ky, kx);
                                    }
                                }
                            }
                        }
                        out.data_mut()[k] = acc;
                        k += 1;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        let x = t(&[2, 3, 7, 6], |i| ((i * 37) % 11) as f64 - 5.0);
        let wt = t(&[4, 3, 3, 3], |i| ((i * 13) % 7) as f64 * 0.1 - 0.3);
        let b = t(&[4], |i| i as f64);
        for g in [
            ConvGeom::same(3),
            ConvGeom { kernel: (3, 3), stride: 2, padding: 1, dilation: 1 },
            ConvGeom { kernel: (3, 3), stride: 1, padding: 2, dilation: 2 },
            ConvGeom { kernel: (3, 3), stride: 1, padding: 0, dilation: 1 },
        ] {
            let got = conv2d_forward(&x, &wt, Some(&b), &g);
            let want = naive_conv(&x, &wt, &b, &g);
            assert!(got.max_abs_diff(&want) < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn conv_backward_is_adjoint_of_forward() {
        // <dout, conv(x)> is bilinear, so dweight/dx must satisfy the adjoint identities.
        let x = t(&[2, 2, 5, 4], |i| ((i * 7) % 5) as f64 - 2.0);
        let wt = t(&[3, 2, 3, 3], |i| ((i * 3) % 7) as f64 * 0.2 - 0.5);
        let g = ConvGeom { kernel: (3, 3), stride: 2, padding: 1, dilation: 1 };
        let y = conv2d_forward(&x, &wt, None, &g);
        let dout = t(y.shape(), |i| ((i * 5) % 9) as f64 - 4.0);
        let grads = conv2d_backward(&x, &wt, &dout, &g, true);
        let lhs: f64 = y.data().iter().zip(dout.data()).map(|(a, b)| a * b).sum();
        let via_w: f64 = grads.dweight.data().iter().zip(wt.data()).map(|(a, b)| a * b).sum();
        let via_x: f64 = grads.dx.unwrap().data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - via_w).abs() < 1e-9);
        assert!((lhs - via_x).abs() < 1e-9);
        assert_eq!(grads.dbias.data()[0], (0..2).map(|s| (0..y.dims4().2 * y.dims4().3).map(|p| dout.data()[s * 3 * 6 + p]).sum::<f64>()).sum::<f64>());
    }

    #[test]
    fn transposed_conv_places_taps() {
        let x = t(&[1, 1, 1, 2], |i| (i + 1) as f64); // [1, 2]
        let wt = t(&[1, 1, 2, 2], |i| (i + 1) as f64); // [[1,2],[3,4]]
        let y = conv_transpose2x2_forward(&x, &wt, None);
        assert_eq!(y.shape(), &[1, 1, 2, 4]);
        assert_eq!(y.data(), &[1.0, 2.0, 2.0, 4.0, 3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn bilinear_same_size_is_identity_and_from_one_pixel_broadcasts() {
        let x = t(&[1, 2, 3, 4], |i| i as f64);
        assert_eq!(resize_bilinear_forward(&x, (3, 4)), x);
        let p = t(&[1, 1, 1, 1], |_| 2.5);
        assert!(resize_bilinear_forward(&p, (3, 5)).data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn adaptive_bins_cover_axis() {
        assert_eq!(adaptive_bins(6, 3), vec![(0, 2), (2, 4), (4, 6)]);
        assert_eq!(adaptive_bins(2, 6).len(), 6);
        assert!(adaptive_bins(5, 3).iter().all(|(a, b)| a < b));
    }

    #[test]
    fn broadcast_index_channel_gate() {
        let idx = broadcast_index(&[1, 2, 2, 2], &[1, 2, 1, 1]);
        assert_eq!(idx, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }
}
