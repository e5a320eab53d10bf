//! Small multi-stream HRNet: a full-resolution stream is kept throughout,
//! lower-resolution streams are added one per stage, and every stage ends
//! with a fusion exchanging information between all streams.

use super::layers::{BasicBlock, Conv2d};
use super::ArchSpec;
use crate::autograd::{Graph, Var};
use crate::params::ParamBuilder;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
enum Exchange {
    /// Lower-resolution source: 1×1 channel match, then bilinear upsampling.
    Up(Conv2d),
    /// Higher-resolution source: chain of stride-2 convolutions.
    Down(Vec<Conv2d>),
}

#[derive(Clone, Debug)]
struct Stage {
    blocks: Vec<BasicBlock>,
    // exchanges[target][source], `None` on the diagonal
    exchanges: Vec<Vec<Option<Exchange>>>,
}

#[derive(Clone, Debug)]
pub struct HrNet {
    stem: (Conv2d, Conv2d),
    transitions: Vec<Conv2d>,
    stages: Vec<Stage>,
    head: (Conv2d, Conv2d),
}

impl HrNet {
    pub fn new(pb: &mut ParamBuilder, spec: &ArchSpec) -> Self {
        let base = spec.base_width;
        let streams = spec.depth;
        let widths: Vec<usize> = (0..streams).map(|i| base << i).collect();
        let stem = (Conv2d::k3(pb, "stem.conv1", spec.in_channels, base), Conv2d::k3(pb, "stem.conv2", base, base));
        let mut transitions = Vec::new();
        let mut stages = Vec::new();
        for s in 0..streams {
            if s > 0 {
                transitions.push(Conv2d::down(pb, &format!("transition{s}"), widths[s - 1], widths[s]));
            }
            let active = s + 1;
            let stage = pb.scoped(&format!("stage{s}"), |pb| {
                let blocks = (0..active).map(|i| BasicBlock::new(pb, &format!("block{i}"), widths[i])).collect();
                let exchanges = (0..active)
                    .map(|t| {
                        (0..active)
                            .map(|src| match src.cmp(&t) {
                                std::cmp::Ordering::Equal => None,
                                std::cmp::Ordering::Greater => {
                                    Some(Exchange::Up(Conv2d::k1(pb, &format!("fuse{src}to{t}"), widths[src], widths[t])))
                                }
                                std::cmp::Ordering::Less => {
                                    let steps = t - src;
                                    let chain = (0..steps)
                                        .map(|k| {
                                            let co = if k + 1 == steps { widths[t] } else { widths[src] };
                                            Conv2d::down(pb, &format!("fuse{src}to{t}.{k}"), widths[src], co)
                                        })
                                        .collect();
                                    Some(Exchange::Down(chain))
                                }
                            })
                            .collect()
                    })
                    .collect();
                Stage { blocks, exchanges }
            });
            stages.push(stage);
        }
        let total: usize = widths.iter().sum();
        let head = (Conv2d::k1(pb, "head.mix", total, base), Conv2d::k1(pb, "head.classifier", base, spec.num_classes));
        Self { stem, transitions, stages, head }
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<'_, T>, x: &Var<T>, slope: f64) -> Var<T> {
        let y = self.stem.0.forward_act(g, x, slope);
        let y = self.stem.1.forward_act(g, &y, slope);
        let mut streams = vec![y];
        for (s, stage) in self.stages.iter().enumerate() {
            if s > 0 {
                let last = streams.last().unwrap().clone();
                streams.push(self.transitions[s - 1].forward_act(g, &last, slope));
            }
            let branched: Vec<Var<T>> = stage.blocks.iter().zip(&streams).map(|(b, x)| b.forward(g, x, slope)).collect();
            streams = stage
                .exchanges
                .iter()
                .enumerate()
                .map(|(t, row)| {
                    let (_, _, th, tw) = branched[t].dims4();
                    let mut acc = branched[t].clone();
                    for (src, ex) in row.iter().enumerate() {
                        let Some(ex) = ex else { continue };
                        let contrib = match ex {
                            Exchange::Up(conv) => {
                                let c = conv.forward(g, &branched[src]);
                                g.tape.resize_bilinear(&c, (th, tw))
                            }
                            Exchange::Down(chain) => {
                                let mut c = branched[src].clone();
                                for (k, conv) in chain.iter().enumerate() {
                                    c = if k + 1 == chain.len() { conv.forward(g, &c) } else { conv.forward_act(g, &c, slope) };
                                }
                                c
                            }
                        };
                        acc = g.tape.add(&acc, &contrib);
                    }
                    g.tape.leaky_relu(&acc, slope)
                })
                .collect();
        }
        let (_, _, h, w) = streams[0].dims4();
        let ups: Vec<Var<T>> = streams.iter().map(|s| g.tape.resize_bilinear(s, (h, w))).collect();
        let refs: Vec<&Var<T>> = ups.iter().collect();
        let cat = g.tape.concat_channels(&refs);
        let m = self.head.0.forward_act(g, &cat, slope);
        self.head.1.forward(g, &m)
    }
}
