//! PSPNet: strided encoder to 1/8 resolution, pyramid pooling over bins
//! {1, 2, 3, 6}, logits at 1/8 upsampled bilinearly to the input size.

use super::layers::Conv2d;
use super::ArchSpec;
use crate::autograd::{Graph, Var};
use crate::params::ParamBuilder;
use crate::scalar::Scalar;

pub const PYRAMID_BINS: [usize; 4] = [1, 2, 3, 6];

#[derive(Clone, Debug)]
pub struct PspNet {
    stem: Conv2d,
    stages: Vec<(Conv2d, Conv2d)>,
    pyramid: Vec<(usize, Conv2d)>,
    fuse: Conv2d,
    head: Conv2d,
}

impl PspNet {
    pub fn new(pb: &mut ParamBuilder, spec: &ArchSpec) -> Self {
        let base = spec.base_width;
        let stem = Conv2d::k3(pb, "stem", spec.in_channels, base);
        let mut stages = Vec::with_capacity(spec.depth);
        let mut ci = base;
        for i in 1..=spec.depth {
            let w = base << i.min(3);
            stages.push((Conv2d::down(pb, &format!("stage{i}.down"), ci, w), Conv2d::k3(pb, &format!("stage{i}.conv"), w, w)));
            ci = w;
        }
        let branch = (ci / 4).max(1);
        let pyramid = PYRAMID_BINS.iter().map(|&b| (b, Conv2d::k1(pb, &format!("ppm.bin{b}"), ci, branch))).collect();
        let fuse = Conv2d::k3(pb, "fuse", ci + PYRAMID_BINS.len() * branch, ci);
        let head = Conv2d::k1(pb, "head", ci, spec.num_classes);
        Self { stem, stages, pyramid, fuse, head }
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let (_, _, h, w) = x.dims4();
        let mut y = self.stem.forward_act(g, x, slope);
        for (down, conv) in &self.stages {
            y = down.forward_act(g, &y, slope);
            y = conv.forward_act(g, &y, slope);
        }
        let (_, _, fh, fw) = y.dims4();
        let mut parts = vec![y.clone()];
        for (bins, conv) in &self.pyramid {
            let p = g.tape.adaptive_avg_pool(&y, *bins);
            let p = conv.forward_act(g, &p, slope);
            parts.push(g.tape.resize_bilinear(&p, (fh, fw)));
        }
        let refs: Vec<&Var<T>> = parts.iter().collect();
        let cat = g.tape.concat_channels(&refs);
        let f = self.fuse.forward_act(g, &cat, slope);
        let logits = self.head.forward(g, &f);
        g.tape.resize_bilinear(&logits, (h, w))
    }
}
