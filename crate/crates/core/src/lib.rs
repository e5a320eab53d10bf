//! Hyperspectral semantic segmentation benchmarking: data model, dataset
//! I/O, segmentation architectures with reverse-mode autodiff, training
//! (loss, AdaBelief, plateau scheduling with restarts), and metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pick a concrete precision.

pub mod autograd;
pub mod checkpoint;
pub mod dataset;
mod error;
pub mod kv;
pub mod loss;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod types;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use train::{fit, Precision, TrainConfig};
pub use models::{build_model, count_parameters, ArchFamily, ArchSpec, ModelHandle};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use types::{ClassTaxonomy, DatasetDescriptor, HsiCube, LabelMap, Sample, Violation, IGNORE_ID};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = ModelHandle<f32>;
pub type Model64 = ModelHandle<f64>;
pub type ParamStore32 = params::ParamStore<f32>;
pub type ParamStore64 = params::ParamStore<f64>;
