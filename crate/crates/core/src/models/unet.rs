//! U-Net with optional CBAM or coordinate attention after every encoder
//! stage and at the bottleneck.

use super::attention::{Cbam, CoordAttention};
use super::layers::{Conv2d, DoubleConv, UpConv};
use super::{ArchFamily, ArchSpec};
use crate::autograd::{Graph, Var};
use crate::params::ParamBuilder;
use crate::scalar::Scalar;
use crate::Result;

#[derive(Clone, Debug)]
enum Attention {
    Cbam(Cbam),
    Coord(CoordAttention),
}

impl Attention {
    fn build(pb: &mut ParamBuilder, name: &str, family: ArchFamily, channels: usize, r: usize) -> Result<Option<Self>> {
        Ok(match family {
            ArchFamily::UNetCbam => Some(Attention::Cbam(Cbam::new(pb, name, channels, r)?)),
            ArchFamily::UNetCa => Some(Attention::Coord(CoordAttention::new(pb, name, channels, r)?)),
            _ => None,
        })
    }

    fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        match self {
            Attention::Cbam(a) => a.forward(g, x, slope),
            Attention::Coord(a) => a.forward(g, x, slope),
        }
    }
}

#[derive(Clone, Debug)]
pub struct UNet {
    encoders: Vec<(DoubleConv, Option<Attention>)>,
    bottleneck: (DoubleConv, Option<Attention>),
    decoders: Vec<(UpConv, DoubleConv)>,
    head: Conv2d,
}

impl UNet {
    pub fn new(pb: &mut ParamBuilder, spec: &ArchSpec) -> Result<Self> {
        let widths: Vec<usize> = (0..=spec.depth).map(|i| spec.base_width << i).collect();
        let r = spec.attention_reduction;
        let mut encoders = Vec::with_capacity(spec.depth);
        let mut ci = spec.in_channels;
        for (i, &w) in widths[..spec.depth].iter().enumerate() {
            let block = DoubleConv::new(pb, &format!("enc{i}"), ci, w);
            let attn = Attention::build(pb, &format!("enc{i}.attn"), spec.family, w, r)?;
            encoders.push((block, attn));
            ci = w;
        }
        let wb = widths[spec.depth];
        let bottleneck = (DoubleConv::new(pb, "bottleneck", ci, wb), Attention::build(pb, "bottleneck.attn", spec.family, wb, r)?);
        let mut decoders = Vec::with_capacity(spec.depth);
        for i in (0..spec.depth).rev() {
            let up = UpConv::new(pb, &format!("dec{i}.up"), widths[i + 1], widths[i]);
            let block = DoubleConv::new(pb, &format!("dec{i}"), 2 * widths[i], widths[i]);
            decoders.push((up, block));
        }
        let head = Conv2d::k1(pb, "head", widths[0], spec.num_classes);
        Ok(Self { encoders, bottleneck, decoders, head })
    }

    /// Input spatial dims must be multiples of `2^depth`.
    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut h = x.clone();
        for (block, attn) in &self.encoders {
            let mut y = block.forward(g, &h, slope);
            if let Some(a) = attn {
                y = a.forward(g, &y, slope);
            }
            h = g.tape.max_pool2x2(&y);
            skips.push(y);
        }
        let (block, attn) = &self.bottleneck;
        h = block.forward(g, &h, slope);
        if let Some(a) = attn {
            h = a.forward(g, &h, slope);
        }
        for (up, block) in &self.decoders {
            let skip = skips.pop().expect("one skip per decoder");
            let u = up.forward(g, &h);
            let cat = g.tape.concat_channels(&[&skip, &u]);
            h = block.forward(g, &cat, slope);
        }
        self.head.forward(g, &h)
    }
}
