//! The six segmentation architectures behind one forward contract:
//! a `(C, H, W)` cube in, `(K, H, W)` logits out, for any `H`, `W`.

pub mod attention;
mod deeplab;
mod hrnet;
pub mod layers;
mod pspnet;
mod unet;

use crate::autograd::{Graph, Var};
use crate::params::{ParamBuilder, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::types::{pad_tensor_to_stride, HsiCube, LabelMap};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use attention::{channel_attention, coordinate_attention, spatial_attention, BottleneckParams, CoordParams, SpatialParams};
pub use pspnet::PYRAMID_BINS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchFamily {
    #[serde(rename = "unet")]
    UNet,
    #[serde(rename = "unet_ca")]
    UNetCa,
    #[serde(rename = "unet_cbam")]
    UNetCbam,
    #[serde(rename = "deeplabv3plus")]
    DeepLabV3Plus,
    #[serde(rename = "pspnet")]
    PspNet,
    #[serde(rename = "hrnet")]
    HrNet,
}

impl ArchFamily {
    pub const ALL: [ArchFamily; 6] =
        [ArchFamily::DeepLabV3Plus, ArchFamily::HrNet, ArchFamily::PspNet, ArchFamily::UNet, ArchFamily::UNetCa, ArchFamily::UNetCbam];

    pub fn key(self) -> &'static str {
        match self {
            ArchFamily::UNet => "unet",
            ArchFamily::UNetCa => "unet_ca",
            ArchFamily::UNetCbam => "unet_cbam",
            ArchFamily::DeepLabV3Plus => "deeplabv3plus",
            ArchFamily::PspNet => "pspnet",
            ArchFamily::HrNet => "hrnet",
        }
    }

    /// Display name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ArchFamily::UNet => "U-Net",
            ArchFamily::UNetCa => "UNet-CA",
            ArchFamily::UNetCbam => "UNet-CBAM",
            ArchFamily::DeepLabV3Plus => "DeepLabv3+",
            ArchFamily::PspNet => "PSPNet",
            ArchFamily::HrNet => "HRNet",
        }
    }

    pub fn is_unet(self) -> bool {
        matches!(self, ArchFamily::UNet | ArchFamily::UNetCa | ArchFamily::UNetCbam)
    }

    pub fn has_attention(self) -> bool {
        matches!(self, ArchFamily::UNetCa | ArchFamily::UNetCbam)
    }
}

impl fmt::Display for ArchFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ArchFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchFamily::ALL
            .into_iter()
            .find(|f| f.key() == s)
            .ok_or_else(|| Error::invalid(format!("unknown architecture family {s:?}")))
    }
}

/// Architecture hyperparameters. For HRNet `depth` is the number of
/// resolution streams; for the other families it is the number of
/// downsampling stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: ArchFamily,
    pub in_channels: usize,
    pub num_classes: usize,
    pub base_width: usize,
    pub depth: usize,
    pub activation_slope: f64,
    pub attention_reduction: usize,
    pub seed: u64,
    pub aspp_rates: Vec<usize>,
    pub aspp_pooling: bool,
}

impl ArchSpec {
    /// Family defaults: U-Nets depth 4 / width 32 / reduction 8, DeepLabv3+
    /// output stride 16, PSPNet 1/8, HRNet three streams of width 16/32/64.
    pub fn new(family: ArchFamily, in_channels: usize, num_classes: usize) -> Self {
        let (base_width, depth) = match family {
            ArchFamily::UNet | ArchFamily::UNetCa | ArchFamily::UNetCbam => (32, 4),
            ArchFamily::DeepLabV3Plus => (32, 4),
            ArchFamily::PspNet => (32, 3),
            ArchFamily::HrNet => (16, 3),
        };
        Self {
            family,
            in_channels,
            num_classes,
            base_width,
            depth,
            activation_slope: 0.01,
            attention_reduction: 8,
            seed: 0,
            aspp_rates: vec![1, 6, 12, 18],
            aspp_pooling: true,
        }
    }

    pub fn with_width(mut self, base_width: usize, depth: usize) -> Self {
        self.base_width = base_width;
        self.depth = depth;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_reduction(mut self, r: usize) -> Self {
        self.attention_reduction = r;
        self
    }

    pub fn required_stride(&self) -> usize {
        match self.family {
            ArchFamily::HrNet => 1 << (self.depth - 1),
            _ => 1 << self.depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::invalid("in_channels and num_classes must be >= 1"));
        }
        if self.num_classes > 254 {
            return Err(Error::invalid("num_classes must be <= 254"));
        }
        if self.base_width == 0 {
            return Err(Error::invalid("base_width must be >= 1"));
        }
        if self.depth == 0 {
            return Err(Error::invalid("depth must be >= 1"));
        }
        if self.depth > 8 || (self.family == ArchFamily::HrNet && self.depth > 4) {
            return Err(Error::invalid(format!("depth {} too large for {}", self.depth, self.family)));
        }
        if !(self.activation_slope.is_finite() && self.activation_slope >= 0.0) {
            return Err(Error::invalid("activation slope must be finite and >= 0"));
        }
        if self.family.has_attention() {
            let r = self.attention_reduction;
            if r == 0 || self.base_width % r != 0 {
                return Err(Error::invalid(format!(
                    "attention_reduction {r} does not divide stage width {}",
                    self.base_width
                )));
            }
        }
        if self.family == ArchFamily::DeepLabV3Plus && (self.aspp_rates.is_empty() || self.aspp_rates.contains(&0)) {
            return Err(Error::invalid("ASPP rates must be non-empty and >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Network {
    UNet(unet::UNet),
    DeepLab(deeplab::DeepLabV3Plus),
    Psp(pspnet::PspNet),
    Hr(hrnet::HrNet),
}

/// A built architecture plus its parameters in scalar type `T`.
#[derive(Clone, Debug)]
pub struct ModelHandle<T: Scalar> {
    spec: ArchSpec,
    net: Network,
    params: ParamStore<T>,
}

/// Builds `spec` with seeded initialization; no pretrained weights.
pub fn build_model<T: Scalar>(spec: &ArchSpec) -> Result<ModelHandle<T>> {
    ModelHandle::build(spec)
}

/// Exact number of trainable scalars.
pub fn count_parameters<T: Scalar>(model: &ModelHandle<T>) -> usize {
    model.params.count()
}

impl<T: Scalar> ModelHandle<T> {
    pub fn build(spec: &ArchSpec) -> Result<Self> {
        spec.validate()?;
        let mut pb = ParamBuilder::new(spec.seed, spec.activation_slope);
        let net = match spec.family {
            ArchFamily::UNet | ArchFamily::UNetCa | ArchFamily::UNetCbam => Network::UNet(unet::UNet::new(&mut pb, spec)?),
            ArchFamily::DeepLabV3Plus => Network::DeepLab(deeplab::DeepLabV3Plus::new(&mut pb, spec)),
            ArchFamily::PspNet => Network::Psp(pspnet::PspNet::new(&mut pb, spec)),
            ArchFamily::HrNet => Network::Hr(hrnet::HrNet::new(&mut pb, spec)),
        };
        Ok(Self { spec: spec.clone(), net, params: pb.finish() })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn required_stride(&self) -> usize {
        self.spec.required_stride()
    }

    /// Replaces all parameters; names and shapes must match the architecture.
    pub fn set_params(&mut self, params: ParamStore<T>) -> Result<()> {
        if params.names() != self.params.names() || params.shapes() != self.params.shapes() {
            return Err(Error::ShapeMismatch("parameter layout does not match the architecture".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelHandle<U> {
        ModelHandle { spec: self.spec.clone(), net: self.net.clone(), params: self.params.cast() }
    }

    /// Same architecture with a different parameter scalar type.
    pub fn with_params<U: Scalar>(&self, params: ParamStore<U>) -> Result<ModelHandle<U>> {
        let mut m = ModelHandle { spec: self.spec.clone(), net: self.net.clone(), params: self.params.cast::<U>() };
        m.set_params(params)?;
        Ok(m)
    }

    /// Differentiable forward of a `(N, C, H, W)` batch: zero-pad bottom/right
    /// to the required stride, run the network, crop back to `(H, W)`.
    pub fn forward_graph(&self, g: &Graph<'_, T>, x: Tensor<T>) -> Result<Var<T>> {
        if x.shape().len() != 4 {
            return Err(Error::ShapeMismatch(format!("expected (N, C, H, W) input, got {:?}", x.shape())));
        }
        let (_, c, h, w) = x.dims4();
        if c != self.spec.in_channels {
            return Err(Error::ChannelMismatch { expected: self.spec.in_channels, actual: c });
        }
        let xp = pad_tensor_to_stride(&x, self.required_stride());
        let xv = g.input(xp);
        let slope = self.spec.activation_slope;
        let out = match &self.net {
            Network::UNet(n) => n.forward(g, &xv, slope),
            Network::DeepLab(n) => n.forward(g, &xv, slope),
            Network::Psp(n) => n.forward(g, &xv, slope),
            Network::Hr(n) => n.forward(g, &xv, slope),
        };
        Ok(g.tape.crop(&out, (h, w)))
    }

    /// Inference on a `(N, C, H, W)` batch.
    pub fn forward_batch(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::new(&self.params, false);
        Ok(self.forward_graph(&g, x)?.into_value())
    }

    /// Inference on one cube: `(K, H, W)` logits.
    pub fn forward(&self, cube: &HsiCube) -> Result<Tensor<T>> {
        let k = self.spec.num_classes;
        let (h, w) = cube.spatial();
        self.forward_batch(cube.to_tensor())?.reshape(&[k, h, w])
    }

    /// Per-pixel argmax of the logits.
    pub fn predict(&self, cube: &HsiCube) -> Result<LabelMap> {
        let logits = self.forward(cube)?;
        argmax_labels(&logits)
    }

    /// Value and parameter gradients of a scalar function of the logits of a
    /// `(N, C, H, W)` batch.
    pub fn value_and_grad(
        &self,
        x: Tensor<T>,
        objective: impl FnOnce(&Graph<'_, T>, &Var<T>) -> Result<Var<T>>,
    ) -> Result<(T, Vec<Tensor<T>>)> {
        let g = Graph::new(&self.params, true);
        let logits = self.forward_graph(&g, x)?;
        let out = objective(&g, &logits)?;
        if out.value().len() != 1 {
            return Err(Error::ShapeMismatch("objective must be a scalar".into()));
        }
        let grads = g.tape.backward(&out);
        Ok((out.value().data()[0], g.param_grads(&grads)))
    }
}

/// Argmax over the class axis of `(K, H, W)` logits; first maximum wins.
pub fn argmax_labels<T: Scalar>(logits: &Tensor<T>) -> Result<LabelMap> {
    let s = logits.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch(format!("logits must be (K, H, W), got {s:?}")));
    }
    let (k, h, w) = (s[0], s[1], s[2]);
    let d = logits.data();
    let labels = (0..h * w)
        .map(|p| {
            let mut best = 0;
            for c in 1..k {
                if d[c * h * w + p] > d[best * h * w + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(h, w, labels)
}
