//! DeepLabv3+: strided convolutional encoder, atrous spatial pyramid pooling
//! and a decoder fusing the pyramid output with 1/4-resolution features.

use super::layers::Conv2d;
use super::ArchSpec;
use crate::autograd::{ConvGeom, Graph, PoolAxes, Var};
use crate::params::ParamBuilder;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub(crate) struct Aspp {
    pub(crate) branches: Vec<Conv2d>,
    pub(crate) pooling: Option<Conv2d>,
    pub(crate) project: Conv2d,
}

impl Aspp {
    /// A rate-1 first branch is a 1×1 convolution; every other rate is a 3×3
    /// convolution with that dilation.
    pub(crate) fn new(pb: &mut ParamBuilder, ci: usize, co: usize, rates: &[usize], pooling: bool) -> Self {
        pb.scoped("aspp", |pb| {
            let branches: Vec<Conv2d> = rates
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let geom = if i == 0 && r == 1 {
                        ConvGeom::same(1)
                    } else {
                        ConvGeom { kernel: (3, 3), stride: 1, padding: r, dilation: r }
                    };
                    Conv2d::new(pb, &format!("branch{i}"), ci, co, geom)
                })
                .collect();
            let pooling = pooling.then(|| Conv2d::k1(pb, "pool", ci, co));
            let n = branches.len() + usize::from(pooling.is_some());
            let project = Conv2d::k1(pb, "project", n * co, co);
            Self { branches, pooling, project }
        })
    }

    pub(crate) fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let (_, _, h, w) = x.dims4();
        let mut outs: Vec<Var<T>> = self.branches.iter().map(|b| b.forward_act(g, x, slope)).collect();
        if let Some(p) = &self.pooling {
            let gp = g.tape.mean_pool(x, PoolAxes::Spatial);
            let y = p.forward_act(g, &gp, slope);
            outs.push(g.tape.resize_bilinear(&y, (h, w)));
        }
        let refs: Vec<&Var<T>> = outs.iter().collect();
        let cat = g.tape.concat_channels(&refs);
        self.project.forward_act(g, &cat, slope)
    }
}

#[derive(Clone, Debug)]
pub struct DeepLabV3Plus {
    stem: Conv2d,
    stages: Vec<(Conv2d, Conv2d)>,
    low_level_stage: usize,
    aspp: Aspp,
    low_proj: Conv2d,
    fuse1: Conv2d,
    fuse2: Conv2d,
    head: Conv2d,
}

impl DeepLabV3Plus {
    pub fn new(pb: &mut ParamBuilder, spec: &ArchSpec) -> Self {
        let base = spec.base_width;
        let stem = Conv2d::k3(pb, "stem", spec.in_channels, base);
        let mut stages = Vec::with_capacity(spec.depth);
        let mut ci = base;
        for i in 1..=spec.depth {
            let w = base << i.min(3);
            let down = Conv2d::down(pb, &format!("stage{i}.down"), ci, w);
            let conv = Conv2d::k3(pb, &format!("stage{i}.conv"), w, w);
            stages.push((down, conv));
            ci = w;
        }
        let low_level_stage = spec.depth.min(2);
        let low_ch = base << low_level_stage.min(3);
        let aspp_ch = base * 8;
        let aspp = Aspp::new(pb, ci, aspp_ch, &spec.aspp_rates, spec.aspp_pooling);
        let low_out = (3 * base).div_ceil(2);
        let low_proj = Conv2d::k1(pb, "decoder.low_proj", low_ch, low_out);
        let fuse1 = Conv2d::k3(pb, "decoder.fuse1", aspp_ch + low_out, aspp_ch);
        let fuse2 = Conv2d::k3(pb, "decoder.fuse2", aspp_ch, aspp_ch);
        let head = Conv2d::k1(pb, "head", aspp_ch, spec.num_classes);
        Self { stem, stages, low_level_stage, aspp, low_proj, fuse1, fuse2, head }
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let (_, _, h, w) = x.dims4();
        let mut y = self.stem.forward_act(g, x, slope);
        let mut low = None;
        for (i, (down, conv)) in self.stages.iter().enumerate() {
            y = down.forward_act(g, &y, slope);
            y = conv.forward_act(g, &y, slope);
            if i + 1 == self.low_level_stage {
                low = Some(y.clone());
            }
        }
        let low = low.unwrap_or_else(|| y.clone());
        let a = self.aspp.forward(g, &y, slope);
        let (_, _, lh, lw) = low.dims4();
        let up = g.tape.resize_bilinear(&a, (lh, lw));
        let lp = self.low_proj.forward_act(g, &low, slope);
        let cat = g.tape.concat_channels(&[&up, &lp]);
        let f = self.fuse1.forward_act(g, &cat, slope);
        let f = self.fuse2.forward_act(g, &f, slope);
        let logits = self.head.forward(g, &f);
        g.tape.resize_bilinear(&logits, (h, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::kernels::conv2d_forward;
    use crate::params::ParamStore;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_rate_aspp_is_parallel_sum_of_unit_rate_convolutions() {
        let (ci, co, slope) = (3, 4, 0.01);
        let mut pb = ParamBuilder::new(11, slope);
        let aspp = Aspp::new(&mut pb, ci, co, &[1, 1, 1, 1], false);
        let mut store: ParamStore<f64> = pb.finish();
        // Non-zero biases so the check also covers them.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).ends_with("bias") {
                for v in store.value_mut(id).data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
        }
        let x = Tensor::from_vec(&[1, ci, 5, 6], (0..90).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

        let g = Graph::new(&store, false);
        let xv = g.input(x.clone());
        let got = aspp.forward(&g, &xv, slope).into_value();

        // Σ_b P_b · act(conv_b(x)) + bias, every conv_b at rate 1.
        let lrelu = |t: Tensor<f64>| t.map(|v| if v > 0.0 { v } else { v * slope });
        let pw = store.value(aspp.project.weight);
        let mut sum = Tensor::<f64>::zeros(&[1, co, 5, 6]);
        for (i, b) in aspp.branches.iter().enumerate() {
            assert_eq!(b.geom.dilation, 1);
            let z = lrelu(conv2d_forward(&x, store.value(b.weight), Some(store.value(b.bias.unwrap())), &b.geom));
            let slice: Vec<f64> = (0..co).flat_map(|o| pw.data()[o * 4 * co + i * co..o * 4 * co + (i + 1) * co].to_vec()).collect();
            let p = Tensor::from_vec(&[co, co, 1, 1], slice).unwrap();
            sum.add_assign(&conv2d_forward(&z, &p, None, &ConvGeom::same(1)));
        }
        let pb_bias = store.value(aspp.project.bias.unwrap()).clone();
        let bias = Tensor::from_vec(&[1, co, 1, 1], pb_bias.data().to_vec()).unwrap();
        let idx = crate::autograd::kernels::broadcast_index(sum.shape(), bias.shape());
        for (v, &i) in sum.data_mut().iter_mut().zip(&idx) {
            *v += bias.data()[i];
        }
        let want = lrelu(sum);
        assert!(got.max_abs_diff(&want) < 1e-12);
    }
}
