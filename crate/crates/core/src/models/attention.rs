//! Channel, spatial and coordinate attention gates.
//!
//! The CBAM block applies a channel gate (shared two-layer bottleneck over
//! the global average- and max-pooled descriptors, summed, then a sigmoid)
//! followed by a spatial gate (7×7 convolution over the channel-wise mean and
//! max maps, then a sigmoid). Coordinate attention pools along each spatial
//! axis separately, encodes both through one shared bottleneck and emits a
//! height gate and a width gate.

use super::layers::Conv2d;
use crate::autograd::{ConvGeom, Graph, PoolAxes, Var};
use crate::params::{ParamBuilder, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};

fn check_reduction(channels: usize, reduction: usize) -> Result<usize> {
    if reduction == 0 || channels % reduction != 0 || channels / reduction == 0 {
        return Err(Error::invalid(format!("attention reduction {reduction} does not divide {channels} channels")));
    }
    Ok(channels / reduction)
}

#[derive(Clone, Debug)]
pub struct ChannelGate {
    fc1: Conv2d,
    fc2: Conv2d,
}

impl ChannelGate {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, reduction: usize) -> Result<Self> {
        let hidden = check_reduction(channels, reduction)?;
        Ok(pb.scoped(name, |pb| Self { fc1: Conv2d::k1(pb, "fc1", channels, hidden), fc2: Conv2d::k1(pb, "fc2", hidden, channels) }))
    }

    fn bottleneck<T: Scalar>(&self, g: &Graph<'_, T>, d: &Var<T>, slope: f64) -> Var<T> {
        let h = self.fc1.forward_act(g, d, slope);
        self.fc2.forward(g, &h)
    }

    /// Per-channel weights, shape `(N, C, 1, 1)`.
    pub fn gate<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let avg = g.tape.mean_pool(x, PoolAxes::Spatial);
        let max = g.tape.max_pool(x, PoolAxes::Spatial);
        let s = g.tape.add(&self.bottleneck(g, &avg, slope), &self.bottleneck(g, &max, slope));
        g.tape.sigmoid(&s)
    }
}

#[derive(Clone, Debug)]
pub struct SpatialGate {
    conv: Conv2d,
}

pub const SPATIAL_KERNEL: usize = 7;

impl SpatialGate {
    pub fn new(pb: &mut ParamBuilder, name: &str) -> Self {
        Self { conv: Conv2d::new(pb, &format!("{name}.conv"), 2, 1, ConvGeom::same(SPATIAL_KERNEL)) }
    }

    /// Spatial weights, shape `(N, 1, H, W)`.
    pub fn gate<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>) -> Var<T> {
        let mean = g.tape.mean_pool(x, PoolAxes::Channel);
        let max = g.tape.max_pool(x, PoolAxes::Channel);
        let both = g.tape.concat_channels(&[&mean, &max]);
        let s = self.conv.forward(g, &both);
        g.tape.sigmoid(&s)
    }
}

#[derive(Clone, Debug)]
pub struct Cbam {
    channel: ChannelGate,
    spatial: SpatialGate,
}

impl Cbam {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, reduction: usize) -> Result<Self> {
        pb.scoped(name, |pb| Ok(Self { channel: ChannelGate::new(pb, "channel", channels, reduction)?, spatial: SpatialGate::new(pb, "spatial") }))
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let mc = self.channel.gate(g, x, slope);
        let x = g.tape.mul(x, &mc);
        let ms = self.spatial.gate(g, &x);
        g.tape.mul(&x, &ms)
    }
}

#[derive(Clone, Debug)]
pub struct CoordAttention {
    encode: Conv2d,
    proj_h: Conv2d,
    proj_w: Conv2d,
}

impl CoordAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, reduction: usize) -> Result<Self> {
        let hidden = check_reduction(channels, reduction)?;
        Ok(pb.scoped(name, |pb| Self {
            encode: Conv2d::k1(pb, "encode", channels, hidden),
            proj_h: Conv2d::k1(pb, "proj_h", hidden, channels),
            proj_w: Conv2d::k1(pb, "proj_w", hidden, channels),
        }))
    }

    /// Height gate `(N, C, H, 1)` and width gate `(N, C, 1, W)`.
    ///
    /// The shared 1×1 encoder is pointwise, so applying it to each pooled
    /// strip separately equals encoding their concatenation.
    pub fn gates<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> (Var<T>, Var<T>) {
        let along_h = g.tape.mean_pool(x, PoolAxes::Width);
        let along_w = g.tape.mean_pool(x, PoolAxes::Height);
        let eh = self.encode.forward_act(g, &along_h, slope);
        let ew = self.encode.forward_act(g, &along_w, slope);
        let ah = self.proj_h.forward(g, &eh);
        let aw = self.proj_w.forward(g, &ew);
        (g.tape.sigmoid(&ah), g.tape.sigmoid(&aw))
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let (ah, aw) = self.gates(g, x, slope);
        let y = g.tape.mul(x, &ah);
        g.tape.mul(&y, &aw)
    }
}

/// Explicit weights of a two-layer 1×1 bottleneck `C → C/r → C`.
#[derive(Clone, Debug)]
pub struct BottleneckParams<T> {
    /// `(C/r, C, 1, 1)`
    pub fc1_weight: Tensor<T>,
    pub fc1_bias: Tensor<T>,
    /// `(C, C/r, 1, 1)`
    pub fc2_weight: Tensor<T>,
    pub fc2_bias: Tensor<T>,
}

impl<T: Scalar> BottleneckParams<T> {
    pub fn zeros(channels: usize, reduction: usize) -> Result<Self> {
        let hidden = check_reduction(channels, reduction)?;
        Ok(Self {
            fc1_weight: Tensor::zeros(&[hidden, channels, 1, 1]),
            fc1_bias: Tensor::zeros(&[hidden]),
            fc2_weight: Tensor::zeros(&[channels, hidden, 1, 1]),
            fc2_bias: Tensor::zeros(&[channels]),
        })
    }
}

/// Explicit weights of a spatial gate: `(1, 2, 7, 7)` kernel and a scalar bias.
#[derive(Clone, Debug)]
pub struct SpatialParams<T> {
    pub kernel: Tensor<T>,
    pub bias: T,
}

/// Explicit weights of coordinate attention.
#[derive(Clone, Debug)]
pub struct CoordParams<T> {
    pub encode_weight: Tensor<T>,
    pub encode_bias: Tensor<T>,
    pub proj_h_weight: Tensor<T>,
    pub proj_h_bias: Tensor<T>,
    pub proj_w_weight: Tensor<T>,
    pub proj_w_bias: Tensor<T>,
}

impl<T: Scalar> CoordParams<T> {
    pub fn zeros(channels: usize, reduction: usize) -> Result<Self> {
        let hidden = check_reduction(channels, reduction)?;
        Ok(Self {
            encode_weight: Tensor::zeros(&[hidden, channels, 1, 1]),
            encode_bias: Tensor::zeros(&[hidden]),
            proj_h_weight: Tensor::zeros(&[channels, hidden, 1, 1]),
            proj_h_bias: Tensor::zeros(&[channels]),
            proj_w_weight: Tensor::zeros(&[channels, hidden, 1, 1]),
            proj_w_bias: Tensor::zeros(&[channels]),
        })
    }
}

fn features_4d<T: Scalar>(features: &Tensor<T>) -> Result<Tensor<T>> {
    let s = features.shape();
    if s.len() != 3 || s.iter().any(|&d| d == 0) {
        return Err(Error::ShapeMismatch(format!("features must be non-empty (C, H, W), got {s:?}")));
    }
    features.clone().reshape(&[1, s[0], s[1], s[2]])
}

fn push_conv<T: Scalar>(store: &mut ParamStore<T>, name: &str, w: &Tensor<T>, b: &Tensor<T>, geom: ConvGeom) -> Result<Conv2d> {
    let (co, _, kh, kw) = w.dims4();
    if (kh, kw) != geom.kernel || b.shape() != [co] {
        return Err(Error::ShapeMismatch(format!("{name}: weight {:?} / bias {:?}", w.shape(), b.shape())));
    }
    let weight = store.push(format!("{name}.weight"), w.clone());
    let bias = Some(store.push(format!("{name}.bias"), b.clone()));
    Ok(Conv2d { weight, bias, geom })
}

fn check_bottleneck<T: Scalar>(p: &BottleneckParams<T>, c: usize, hidden: usize) -> Result<()> {
    if p.fc1_weight.shape() != [hidden, c, 1, 1] || p.fc2_weight.shape() != [c, hidden, 1, 1] {
        return Err(Error::ShapeMismatch(format!(
            "bottleneck weights {:?}/{:?} do not match {c} channels at reduction to {hidden}",
            p.fc1_weight.shape(),
            p.fc2_weight.shape()
        )));
    }
    Ok(())
}

/// Channel attention weights for `(C, H, W)` features; returns `(C,)` in `(0, 1)`.
pub fn channel_attention<T: Scalar>(features: &Tensor<T>, reduction: usize, params: &BottleneckParams<T>, slope: f64) -> Result<Tensor<T>> {
    let x = features_4d(features)?;
    let c = x.dims4().1;
    let hidden = check_reduction(c, reduction)?;
    check_bottleneck(params, c, hidden)?;
    let mut store = ParamStore::new();
    let gate = ChannelGate {
        fc1: push_conv(&mut store, "fc1", &params.fc1_weight, &params.fc1_bias, ConvGeom::same(1))?,
        fc2: push_conv(&mut store, "fc2", &params.fc2_weight, &params.fc2_bias, ConvGeom::same(1))?,
    };
    let g = Graph::new(&store, false);
    let xv = g.input(x);
    gate.gate(&g, &xv, slope).into_value().reshape(&[c])
}

/// Spatial attention map for `(C, H, W)` features; returns `(H, W)` in `(0, 1)`.
pub fn spatial_attention<T: Scalar>(features: &Tensor<T>, params: &SpatialParams<T>) -> Result<Tensor<T>> {
    let x = features_4d(features)?;
    let (_, _, h, w) = x.dims4();
    if params.kernel.shape() != [1, 2, SPATIAL_KERNEL, SPATIAL_KERNEL] {
        return Err(Error::ShapeMismatch(format!("spatial kernel must be (1, 2, 7, 7), got {:?}", params.kernel.shape())));
    }
    let mut store = ParamStore::new();
    let gate = SpatialGate { conv: push_conv(&mut store, "conv", &params.kernel, &Tensor::scalar(params.bias), ConvGeom::same(SPATIAL_KERNEL))? };
    let g = Graph::new(&store, false);
    let xv = g.input(x);
    gate.gate(&g, &xv).into_value().reshape(&[h, w])
}

/// Coordinate attention gates for `(C, H, W)` features: `(C, H, 1)` and `(C, 1, W)`.
pub fn coordinate_attention<T: Scalar>(
    features: &Tensor<T>,
    reduction: usize,
    params: &CoordParams<T>,
    slope: f64,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let x = features_4d(features)?;
    let (_, c, h, w) = x.dims4();
    check_reduction(c, reduction)?;
    let mut store = ParamStore::new();
    let one = ConvGeom::same(1);
    let ca = CoordAttention {
        encode: push_conv(&mut store, "encode", &params.encode_weight, &params.encode_bias, one)?,
        proj_h: push_conv(&mut store, "proj_h", &params.proj_h_weight, &params.proj_h_bias, one)?,
        proj_w: push_conv(&mut store, "proj_w", &params.proj_w_weight, &params.proj_w_bias, one)?,
    };
    let g = Graph::new(&store, false);
    let xv = g.input(x);
    let (ah, aw) = ca.gates(&g, &xv, slope);
    Ok((ah.into_value().reshape(&[c, h, 1])?, aw.into_value().reshape(&[c, 1, w])?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    fn sigmoid(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    fn lrelu(v: f64, s: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            v * s
        }
    }

    fn rand_bottleneck(rng: &mut ChaCha8Rng, c: usize, hidden: usize) -> BottleneckParams<f64> {
        BottleneckParams {
            fc1_weight: rand_tensor(rng, &[hidden, c, 1, 1], 1.0),
            fc1_bias: rand_tensor(rng, &[hidden], 0.5),
            fc2_weight: rand_tensor(rng, &[c, hidden, 1, 1], 1.0),
            fc2_bias: rand_tensor(rng, &[c], 0.5),
        }
    }

    /// Direct evaluation of `W2·act(W1·d + b1) + b2`.
    fn bottleneck_ref(p: &BottleneckParams<f64>, d: &[f64], slope: f64) -> Vec<f64> {
        let c = d.len();
        let hidden = p.fc1_bias.len();
        let h: Vec<f64> = (0..hidden)
            .map(|j| lrelu(p.fc1_bias.data()[j] + (0..c).map(|i| p.fc1_weight.data()[j * c + i] * d[i]).sum::<f64>(), slope))
            .collect();
        (0..c).map(|i| p.fc2_bias.data()[i] + (0..hidden).map(|j| p.fc2_weight.data()[i * hidden + j] * h[j]).sum::<f64>()).collect()
    }

    #[test]
    fn zero_bottleneck_gives_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = rand_tensor(&mut rng, &[8, 3, 5], 2.0);
        let w = channel_attention(&f, 4, &BottleneckParams::zeros(8, 4).unwrap(), 0.01).unwrap();
        assert_eq!(w.shape(), &[8]);
        assert!(w.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn constant_features_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, r) = (6, 3);
        let p = rand_bottleneck(&mut rng, c, c / r);
        let d: Vec<f64> = (0..c).map(|i| 0.3 * i as f64 - 0.7).collect();
        let mut vals = Vec::new();
        for &v in &d {
            vals.extend(std::iter::repeat_n(v, 4 * 5));
        }
        let f = Tensor::from_vec(&[c, 4, 5], vals).unwrap();
        let got = channel_attention(&f, r, &p, 0.01).unwrap();
        let b = bottleneck_ref(&p, &d, 0.01);
        for i in 0..c {
            assert!((got.data()[i] - sigmoid(2.0 * b[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn channel_weights_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = rand_bottleneck(&mut rng, 8, 2);
            let f = rand_tensor(&mut rng, &[8, 4, 4], 3.0);
            let w = channel_attention(&f, 4, &p, 0.01).unwrap();
            assert!(w.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn reduction_must_divide_channels() {
        let f = Tensor::<f64>::zeros(&[6, 2, 2]);
        assert!(BottleneckParams::<f64>::zeros(6, 4).is_err());
        let p = BottleneckParams::<f64>::zeros(6, 3).unwrap();
        assert!(channel_attention(&f, 4, &p, 0.01).is_err());
        assert!(coordinate_attention(&f, 4, &CoordParams::zeros(6, 3).unwrap(), 0.01).is_err());
    }

    #[test]
    fn zero_spatial_kernel_gives_half_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = rand_tensor(&mut rng, &[3, 5, 6], 1.0);
        let m = spatial_attention(&f, &SpatialParams { kernel: Tensor::zeros(&[1, 2, 7, 7]), bias: 0.0 }).unwrap();
        assert_eq!(m.shape(), &[5, 6]);
        assert!(m.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_pixel_spatial_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel = rand_tensor(&mut rng, &[1, 2, 7, 7], 1.0);
        let f = Tensor::from_vec(&[3, 1, 1], vec![0.4, -1.2, 0.9]).unwrap();
        let m = spatial_attention(&f, &SpatialParams { kernel: kernel.clone(), bias: 0.25 }).unwrap();
        let mean = (0.4 - 1.2 + 0.9) / 3.0;
        let max = 0.9;
        let centre = 3 * 7 + 3;
        let want = sigmoid(kernel.data()[centre] * mean + kernel.data()[49 + centre] * max + 0.25);
        assert!((m.data()[0] - want).abs() < 1e-14);
    }

    #[test]
    fn spatial_map_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let kernel = rand_tensor(&mut rng, &[1, 2, 7, 7], 1.0);
            let f = rand_tensor(&mut rng, &[4, 6, 3], 2.0);
            let m = spatial_attention(&f, &SpatialParams { kernel, bias: 0.1 }).unwrap();
            assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    fn rand_coord(rng: &mut ChaCha8Rng, c: usize, hidden: usize) -> CoordParams<f64> {
        CoordParams {
            encode_weight: rand_tensor(rng, &[hidden, c, 1, 1], 1.0),
            encode_bias: rand_tensor(rng, &[hidden], 0.5),
            proj_h_weight: rand_tensor(rng, &[c, hidden, 1, 1], 1.0),
            proj_h_bias: rand_tensor(rng, &[c], 0.5),
            proj_w_weight: rand_tensor(rng, &[c, hidden, 1, 1], 1.0),
            proj_w_bias: rand_tensor(rng, &[c], 0.5),
        }
    }

    #[test]
    fn zero_projection_gives_half_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = rand_coord(&mut rng, 4, 2);
        for t in [&mut p.proj_h_weight, &mut p.proj_h_bias, &mut p.proj_w_weight, &mut p.proj_w_bias] {
            *t = Tensor::zeros(t.shape());
        }
        let f = rand_tensor(&mut rng, &[4, 3, 5], 1.0);
        let (ah, aw) = coordinate_attention(&f, 2, &p, 0.01).unwrap();
        assert!(ah.data().iter().chain(aw.data()).all(|&v| v == 0.5));
    }

    #[test]
    fn single_pixel_coordinate_gates_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (c, hidden) = (4, 2);
        let mut p = rand_coord(&mut rng, c, hidden);
        let f = rand_tensor(&mut rng, &[c, 1, 1], 1.0);
        let (ah, aw) = coordinate_attention(&f, 2, &p, 0.01).unwrap();
        assert_eq!((ah.shape(), aw.shape()), (&[c, 1, 1][..], &[c, 1, 1][..]));
        let e: Vec<f64> = (0..hidden)
            .map(|j| lrelu(p.encode_bias.data()[j] + (0..c).map(|i| p.encode_weight.data()[j * c + i] * f.data()[i]).sum::<f64>(), 0.01))
            .collect();
        let gate = |w: &Tensor<f64>, b: &Tensor<f64>, i: usize| sigmoid(b.data()[i] + (0..hidden).map(|j| w.data()[i * hidden + j] * e[j]).sum::<f64>());
        for i in 0..c {
            assert!((ah.data()[i] - gate(&p.proj_h_weight, &p.proj_h_bias, i)).abs() < 1e-14);
            assert!((aw.data()[i] - gate(&p.proj_w_weight, &p.proj_w_bias, i)).abs() < 1e-14);
        }
        // With tied projections the two directional gates coincide.
        p.proj_w_weight = p.proj_h_weight.clone();
        p.proj_w_bias = p.proj_h_bias.clone();
        let (ah, aw) = coordinate_attention(&f, 2, &p, 0.01).unwrap();
        assert_eq!(ah.data(), aw.data());
    }

    #[test]
    fn coordinate_gate_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = rand_coord(&mut rng, 8, 1);
        let f = rand_tensor(&mut rng, &[8, 5, 7], 1.0);
        let (ah, aw) = coordinate_attention(&f, 8, &p, 0.01).unwrap();
        assert_eq!(ah.shape(), &[8, 5, 1]);
        assert_eq!(aw.shape(), &[8, 1, 7]);
        assert!(ah.data().iter().chain(aw.data()).all(|&v| v > 0.0 && v < 1.0));
    }
}
