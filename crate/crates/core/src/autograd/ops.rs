//! Differentiable ops on the tape.

use super::kernels::{self, ConvGeom, PoolAxes};
use super::{Tape, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::sync::Arc;

impl<T: Scalar> Tape<T> {
    pub fn conv2d(&self, x: &Var<T>, weight: &Var<T>, bias: Option<&Var<T>>, geom: ConvGeom) -> Var<T> {
        let out = kernels::conv2d_forward(&x.value, &weight.value, bias.map(|b| &*b.value), &geom);
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        let bw = self.needs_grad(&inputs).then(|| {
            let (xv, wv) = (Arc::clone(&x.value), Arc::clone(&weight.value));
            let need_dx = x.tracked();
            let has_bias = bias.is_some();
            Box::new(move |g: &Tensor<T>| {
                let gr = kernels::conv2d_backward(&xv, &wv, g, &geom, need_dx);
                let mut v = vec![gr.dx, Some(gr.dweight)];
                if has_bias {
                    v.push(Some(gr.dbias));
                }
                v
            }) as _
        });
        self.op(out, &inputs, bw)
    }

    pub fn conv_transpose2x2(&self, x: &Var<T>, weight: &Var<T>, bias: Option<&Var<T>>) -> Var<T> {
        let out = kernels::conv_transpose2x2_forward(&x.value, &weight.value, bias.map(|b| &*b.value));
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        let bw = self.needs_grad(&inputs).then(|| {
            let (xv, wv) = (Arc::clone(&x.value), Arc::clone(&weight.value));
            let need_dx = x.tracked();
            let has_bias = bias.is_some();
            Box::new(move |g: &Tensor<T>| {
                let gr = kernels::conv_transpose2x2_backward(&xv, &wv, g, need_dx);
                let mut v = vec![gr.dx, Some(gr.dweight)];
                if has_bias {
                    v.push(Some(gr.dbias));
                }
                v
            }) as _
        });
        self.op(out, &inputs, bw)
    }

    pub fn max_pool2x2(&self, x: &Var<T>) -> Var<T> {
        let (out, arg) = kernels::max_pool2x2_forward(&x.value);
        let bw = self.needs_grad(&[x]).then(|| {
            let shape = x.shape().to_vec();
            Box::new(move |g: &Tensor<T>| vec![Some(kernels::scatter_argmax(g, &arg, &shape))]) as _
        });
        self.op(out, &[x], bw)
    }

    pub fn leaky_relu(&self, x: &Var<T>, slope: f64) -> Var<T> {
        let s = T::lit(slope);
        let out = x.value.map(|v| if v > T::zero() { v } else { v * s });
        let bw = self.needs_grad(&[x]).then(|| {
            let xv = Arc::clone(&x.value);
            Box::new(move |g: &Tensor<T>| {
                let mut d = g.clone();
                for (dv, &xv) in d.data_mut().iter_mut().zip(xv.data()) {
                    if xv <= T::zero() {
                        *dv *= s;
                    }
                }
                vec![Some(d)]
            }) as _
        });
        self.op(out, &[x], bw)
    }

    pub fn sigmoid(&self, x: &Var<T>) -> Var<T> {
        let out = x.value.map(|v| T::one() / (T::one() + (-v).exp()));
        let bw = self.needs_grad(&[x]).then(|| {
            let y = out.clone();
            Box::new(move |g: &Tensor<T>| {
                let mut d = g.clone();
                for (dv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    *dv *= yv * (T::one() - yv);
                }
                vec![Some(d)]
            }) as _
        });
        self.op(out, &[x], bw)
    }

    /// Elementwise `a + b`, with `b` broadcast to `a`'s shape.
    pub fn add(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        if a.shape() == b.shape() {
            let mut out = (*a.value).clone();
            out.add_assign(&b.value);
            let bw = self.needs_grad(&[a, b]).then(|| Box::new(|g: &Tensor<T>| vec![Some(g.clone()), Some(g.clone())]) as _);
            return self.op(out, &[a, b], bw);
        }
        let idx = kernels::broadcast_index(a.shape(), b.shape());
        let mut out = (*a.value).clone();
        for (o, &i) in out.data_mut().iter_mut().zip(&idx) {
            *o += b.value.data()[i];
        }
        let bw = self.needs_grad(&[a, b]).then(|| {
            let b_shape = b.shape().to_vec();
            Box::new(move |g: &Tensor<T>| {
                let mut db = Tensor::zeros(&b_shape);
                for (&gv, &i) in g.data().iter().zip(&idx) {
                    db.data_mut()[i] += gv;
                }
                vec![Some(g.clone()), Some(db)]
            }) as _
        });
        self.op(out, &[a, b], bw)
    }

    /// Elementwise `a · b`, with `b` broadcast to `a`'s shape.
    pub fn mul(&self, a: &Var<T>, b: &Var<T>) -> Var<T> {
        let idx = kernels::broadcast_index(a.shape(), b.shape());
        let bd = b.value.data();
        let mut out = (*a.value).clone();
        for (o, &i) in out.data_mut().iter_mut().zip(&idx) {
            *o *= bd[i];
        }
        let bw = self.needs_grad(&[a, b]).then(|| {
            let (av, bv) = (Arc::clone(&a.value), Arc::clone(&b.value));
            let (need_a, need_b) = (a.tracked(), b.tracked());
            Box::new(move |g: &Tensor<T>| {
                let da = need_a.then(|| {
                    let mut d = g.clone();
                    for (dv, &i) in d.data_mut().iter_mut().zip(&idx) {
                        *dv *= bv.data()[i];
                    }
                    d
                });
                let db = need_b.then(|| {
                    let mut d = Tensor::zeros(bv.shape());
                    for ((&gv, &av), &i) in g.data().iter().zip(av.data()).zip(&idx) {
                        d.data_mut()[i] += gv * av;
                    }
                    d
                });
                vec![da, db]
            }) as _
        });
        self.op(out, &[a, b], bw)
    }

    pub fn concat_channels(&self, parts: &[&Var<T>]) -> Var<T> {
        let (n, _, h, w) = parts[0].dims4();
        let chans: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (pn, pc, ph, pw) = p.dims4();
                assert_eq!((pn, ph, pw), (n, h, w), "concat spatial/batch mismatch");
                pc
            })
            .collect();
        let total: usize = chans.iter().sum();
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, total, h, w]);
        {
            let dst = out.data_mut();
            for s in 0..n {
                let mut off = 0;
                for (p, &c) in parts.iter().zip(&chans) {
                    dst[(s * total + off) * hw..(s * total + off + c) * hw]
                        .copy_from_slice(&p.value.data()[s * c * hw..(s + 1) * c * hw]);
                    off += c;
                }
            }
        }
        let bw = self.needs_grad(parts).then(|| {
            let chans = chans.clone();
            Box::new(move |g: &Tensor<T>| {
                let mut grads = Vec::with_capacity(chans.len());
                let mut off = 0;
                for &c in &chans {
                    let mut d = Vec::with_capacity(n * c * hw);
                    for s in 0..n {
                        d.extend_from_slice(&g.data()[(s * total + off) * hw..(s * total + off + c) * hw]);
                    }
                    grads.push(Some(Tensor::from_vec(&[n, c, h, w], d).unwrap()));
                    off += c;
                }
                grads
            }) as _
        });
        self.op(out, parts, bw)
    }

    pub fn mean_pool(&self, x: &Var<T>, axes: PoolAxes) -> Var<T> {
        let out = kernels::mean_pool_forward(&x.value, axes);
        let bw = self.needs_grad(&[x]).then(|| {
            let shape = x.shape().to_vec();
            Box::new(move |g: &Tensor<T>| vec![Some(kernels::mean_pool_backward(g, &shape, axes))]) as _
        });
        self.op(out, &[x], bw)
    }

    pub fn max_pool(&self, x: &Var<T>, axes: PoolAxes) -> Var<T> {
        let (out, arg) = kernels::max_pool_axes_forward(&x.value, axes);
        let bw = self.needs_grad(&[x]).then(|| {
            let shape = x.shape().to_vec();
            Box::new(move |g: &Tensor<T>| vec![Some(kernels::scatter_argmax(g, &arg, &shape))]) as _
        });
        self.op(out, &[x], bw)
    }

    pub fn adaptive_avg_pool(&self, x: &Var<T>, bins: usize) -> Var<T> {
        let out = kernels::adaptive_avg_pool_forward(&x.value, bins);
        let bw = self.needs_grad(&[x]).then(|| {
            let (_, _, h, w) = x.dims4();
            Box::new(move |g: &Tensor<T>| vec![Some(kernels::adaptive_avg_pool_backward(g, (h, w)))]) as _
        });
        self.op(out, &[x], bw)
    }

    pub fn resize_bilinear(&self, x: &Var<T>, size: (usize, usize)) -> Var<T> {
        let (_, _, h, w) = x.dims4();
        if (h, w) == size {
            return x.clone();
        }
        let out = kernels::resize_bilinear_forward(&x.value, size);
        let bw = self.needs_grad(&[x]).then(|| {
            Box::new(move |g: &Tensor<T>| vec![Some(kernels::resize_bilinear_backward(g, (h, w)))]) as _
        });
        self.op(out, &[x], bw)
    }

    /// Top-left `(h, w)` window of every plane.
    pub fn crop(&self, x: &Var<T>, (h, w): (usize, usize)) -> Var<T> {
        let (n, c, ph, pw) = x.dims4();
        assert!(h <= ph && w <= pw, "crop larger than input");
        if (h, w) == (ph, pw) {
            return x.clone();
        }
        let src = x.value.data();
        let mut d = Vec::with_capacity(n * c * h * w);
        for p in 0..n * c {
            for r in 0..h {
                d.extend_from_slice(&src[(p * ph + r) * pw..(p * ph + r) * pw + w]);
            }
        }
        let out = Tensor::from_vec(&[n, c, h, w], d).unwrap();
        let bw = self.needs_grad(&[x]).then(|| {
            Box::new(move |g: &Tensor<T>| {
                let mut dx = Tensor::zeros(&[n, c, ph, pw]);
                let dst = dx.data_mut();
                for p in 0..n * c {
                    for r in 0..h {
                        dst[(p * ph + r) * pw..(p * ph + r) * pw + w].copy_from_slice(&g.data()[(p * h + r) * w..(p * h + r + 1) * w]);
                    }
                }
                vec![Some(dx)]
            }) as _
        });
        self.op(out, &[x], bw)
    }

    pub fn sum(&self, x: &Var<T>) -> Var<T> {
        let out = Tensor::scalar(x.value.sum());
        let bw = self.needs_grad(&[x]).then(|| {
            let shape = x.shape().to_vec();
            Box::new(move |g: &Tensor<T>| vec![Some(Tensor::full(&shape, g.data()[0]))]) as _
        });
        self.op(out, &[x], bw)
    }

    /// `Σ x ⊙ coeffs` for a constant coefficient tensor of the same shape.
    pub fn weighted_sum(&self, x: &Var<T>, coeffs: &Tensor<T>) -> Var<T> {
        assert_eq!(x.shape(), coeffs.shape(), "weighted_sum shape");
        let out = Tensor::scalar(x.value.data().iter().zip(coeffs.data()).map(|(&a, &b)| a * b).sum());
        let bw = self.needs_grad(&[x]).then(|| {
            let c = coeffs.clone();
            Box::new(move |g: &Tensor<T>| {
                let mut d = c.clone();
                d.scale(g.data()[0]);
                vec![Some(d)]
            }) as _
        });
        self.op(out, &[x], bw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of d(Σ coeffs ⊙ f(x))/dx for a unary op.
    fn check_unary(shape: &[usize], f: impl Fn(&Tape<f64>, &Var<f64>) -> Var<f64>) {
        let n: usize = shape.iter().product();
        let x0 = Tensor::from_vec(shape, (0..n).map(|i| ((i * 7919) % 23) as f64 / 7.0 - 1.3).collect()).unwrap();
        let eval = |x: &Tensor<f64>, coeffs: Option<&Tensor<f64>>| {
            let tape = Tape::new();
            let v = tape.leaf(Arc::new(x.clone()));
            let y = f(&tape, &v);
            let c = coeffs.cloned().unwrap_or_else(|| {
                let m = y.value().len();
                Tensor::from_vec(y.shape(), (0..m).map(|i| ((i * 31) % 13) as f64 / 5.0 - 1.0).collect()).unwrap()
            });
            let s = tape.weighted_sum(&y, &c);
            let g = tape.backward(&s);
            (s.value().data()[0], g.get(&v).cloned().unwrap_or_else(|| Tensor::zeros(shape)), c)
        };
        let (_, analytic, c) = eval(&x0, None);
        let h = 1e-6;
        for i in 0..n {
            let mut xp = x0.clone();
            xp.data_mut()[i] += h;
            let mut xm = x0.clone();
            xm.data_mut()[i] -= h;
            let fd = (eval(&xp, Some(&c)).0 - eval(&xm, Some(&c)).0) / (2.0 * h);
            let a = analytic.data()[i];
            assert!((fd - a).abs() <= 1e-6 * (1.0 + a.abs()), "index {i}: analytic {a} vs fd {fd}");
        }
    }

    #[test]
    fn gradients_of_unary_ops() {
        check_unary(&[1, 2, 3, 3], |t, x| t.sigmoid(x));
        check_unary(&[1, 2, 3, 3], |t, x| t.leaky_relu(x, 0.01));
        check_unary(&[2, 2, 4, 4], |t, x| t.max_pool2x2(x));
        check_unary(&[1, 2, 5, 4], |t, x| t.resize_bilinear(x, (7, 9)));
        check_unary(&[1, 2, 5, 4], |t, x| t.resize_bilinear(x, (2, 3)));
        check_unary(&[1, 2, 5, 7], |t, x| t.adaptive_avg_pool(x, 3));
        check_unary(&[1, 3, 5, 4], |t, x| t.crop(x, (3, 2)));
        for axes in [PoolAxes::Spatial, PoolAxes::Channel, PoolAxes::Width, PoolAxes::Height] {
            check_unary(&[2, 3, 3, 4], |t, x| t.mean_pool(x, axes));
            check_unary(&[2, 3, 3, 4], |t, x| t.max_pool(x, axes));
        }
    }

    #[test]
    fn gradients_of_binary_and_concat() {
        check_unary(&[1, 2, 3, 3], |t, x| {
            let gate = t.mean_pool(x, PoolAxes::Spatial);
            let gate = t.sigmoid(&gate);
            t.mul(x, &gate)
        });
        check_unary(&[1, 2, 3, 3], |t, x| {
            let m = t.mean_pool(x, PoolAxes::Channel);
            let y = t.add(x, &m);
            t.concat_channels(&[&y, x, &m])
        });
        check_unary(&[1, 2, 3, 3], |t, x| {
            let w = t.constant(Tensor::from_vec(&[3, 2, 3, 3], (0..54).map(|i| (i % 5) as f64 * 0.1 - 0.2).collect()).unwrap());
            t.conv2d(x, &w, None, ConvGeom { kernel: (3, 3), stride: 2, padding: 1, dilation: 1 })
        });
        check_unary(&[1, 2, 3, 2], |t, x| {
            let w = t.constant(Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|i| (i % 7) as f64 * 0.1 - 0.3).collect()).unwrap());
            t.conv_transpose2x2(x, &w, None)
        });
    }
}
