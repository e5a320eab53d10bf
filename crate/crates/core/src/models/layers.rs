//! Parameterized building blocks shared by the architectures.

use crate::autograd::{ConvGeom, Graph, Var};
use crate::params::{ParamBuilder, ParamId};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
}

impl Conv2d {
    pub fn new(pb: &mut ParamBuilder, name: &str, ci: usize, co: usize, geom: ConvGeom) -> Self {
        let (kh, kw) = geom.kernel;
        pb.scoped(name, |pb| Self {
            weight: pb.weight("weight", &[co, ci, kh, kw], ci * kh * kw),
            bias: Some(pb.zeros("bias", &[co])),
            geom,
        })
    }

    pub fn k3(pb: &mut ParamBuilder, name: &str, ci: usize, co: usize) -> Self {
        Self::new(pb, name, ci, co, ConvGeom::same(3))
    }

    pub fn k1(pb: &mut ParamBuilder, name: &str, ci: usize, co: usize) -> Self {
        Self::new(pb, name, ci, co, ConvGeom::same(1))
    }

    /// 3×3, stride 2, padding 1: halves even spatial dims exactly.
    pub fn down(pb: &mut ParamBuilder, name: &str, ci: usize, co: usize) -> Self {
        Self::new(pb, name, ci, co, ConvGeom { kernel: (3, 3), stride: 2, padding: 1, dilation: 1 })
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>) -> Var<T> {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.tape.conv2d(x, &w, b.as_ref(), self.geom)
    }

    /// Convolution followed by the leaky rectifier.
    pub fn forward_act<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let y = self.forward(g, x);
        g.tape.leaky_relu(&y, slope)
    }
}

/// 2×2 stride-2 transposed convolution.
#[derive(Clone, Debug)]
pub struct UpConv {
    weight: ParamId,
    bias: ParamId,
}

impl UpConv {
    pub fn new(pb: &mut ParamBuilder, name: &str, ci: usize, co: usize) -> Self {
        pb.scoped(name, |pb| Self { weight: pb.weight("weight", &[ci, co, 2, 2], ci), bias: pb.zeros("bias", &[co]) })
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>) -> Var<T> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.tape.conv_transpose2x2(x, &w, Some(&b))
    }
}

/// Two 3×3 convolutions, each followed by the leaky rectifier.
#[derive(Clone, Debug)]
pub struct DoubleConv {
    first: Conv2d,
    second: Conv2d,
}

impl DoubleConv {
    pub fn new(pb: &mut ParamBuilder, name: &str, ci: usize, co: usize) -> Self {
        pb.scoped(name, |pb| Self { first: Conv2d::k3(pb, "conv1", ci, co), second: Conv2d::k3(pb, "conv2", co, co) })
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let y = self.first.forward_act(g, x, slope);
        self.second.forward_act(g, &y, slope)
    }
}

/// Residual block: `act(conv(act(conv(x))) + x)`.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    first: Conv2d,
    second: Conv2d,
}

impl BasicBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, width: usize) -> Self {
        pb.scoped(name, |pb| Self { first: Conv2d::k3(pb, "conv1", width, width), second: Conv2d::k3(pb, "conv2", width, width) })
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let y = self.first.forward_act(g, x, slope);
        let y = self.second.forward(g, &y);
        let y = g.tape.add(&y, x);
        g.tape.leaky_relu(&y, slope)
    }
}
