//! The training recipe: seeded data order, gradient accumulation,
//! AdaBelief steps, per-epoch validation, plateau scheduling, and best-model
//! selection by validation mean IoU. No early stopping.

use crate::autograd::Graph;
use crate::checkpoint::{BestRecord, Checkpoint};
use crate::dataset::compute_pixel_stats;
use crate::loss::{batch_loss, ClassWeights, LossConfig, WeightMode};
use crate::metrics::{per_class_metrics, ConfusionMatrix, MetricsReport};
use crate::models::{argmax_labels, ArchSpec, ModelHandle};
use crate::optim::{AdaBelief, AdaBeliefConfig, GradAccumulator, Scheduler, SchedulerConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::types::{LabelMap, Sample};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// Everything in f64.
    Full,
    /// f32 forward/backward; f64 master weights, optimizer state and loss
    /// reduction.
    #[default]
    Mixed,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::invalid(format!("unknown precision {s:?}"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Full => "full",
            Precision::Mixed => "mixed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub precision: Precision,
    /// Seeds the per-epoch data order.
    pub seed: u64,
    pub shuffle: bool,
    pub arch: ArchSpec,
    pub loss: LossConfig,
    pub weight_mode: WeightMode,
    pub optimizer: AdaBeliefConfig,
    pub scheduler: SchedulerConfig,
}

impl TrainConfig {
    pub fn new(arch: ArchSpec) -> Self {
        Self {
            epochs: 300,
            batch_size: 16,
            accumulation_steps: 2,
            precision: Precision::Mixed,
            seed: 0,
            shuffle: true,
            arch,
            loss: LossConfig::default(),
            weight_mode: WeightMode::InverseFrequency,
            optimizer: AdaBeliefConfig::default(),
            scheduler: SchedulerConfig::default(),
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.accumulation_steps
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be ≥ 1"));
        }
        if self.batch_size == 0 || self.accumulation_steps == 0 {
            return Err(Error::invalid("batch_size and accumulation_steps must be ≥ 1"));
        }
        self.arch.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.scheduler.validate()
    }
}

/// One row of the metric history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub val_miou: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,lr,val_mIoU";

/// History as CSV; floats use shortest round-trip formatting.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in history {
        s.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", r.epoch, r.train_loss, r.val_loss, r.lr, r.val_miou));
    }
    s
}

/// Permutation of `0..n` for `epoch`: a pure function of `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order
}

/// Stacks cubes into an `(N, C, H, W)` tensor.
pub fn stack_cubes<T: Scalar>(samples: &[&Sample]) -> Result<Tensor<T>> {
    let first = samples.first().ok_or(Error::NoBatches)?;
    let (c, (h, w)) = (first.cube.bands(), first.cube.spatial());
    let mut data = Vec::with_capacity(samples.len() * c * h * w);
    for s in samples {
        if s.cube.bands() != c || s.cube.spatial() != (h, w) {
            return Err(Error::ShapeMismatch(format!("sample {} does not match the batch shape", s.id)));
        }
        data.extend(s.cube.values().iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::from_vec(&[samples.len(), c, h, w], data)
}

/// Batch loss and parameter gradients of one micro-batch, returned in f64.
fn micro_batch<T: Scalar>(
    model: &ModelHandle<T>,
    batch: &[&Sample],
    weights: &ClassWeights,
    loss: &LossConfig,
) -> Result<(f64, Vec<Tensor<f64>>)> {
    let x = stack_cubes::<T>(batch)?;
    let labels: Vec<&LabelMap> = batch.iter().map(|s| &s.labels).collect();
    let (value, grads) = model.value_and_grad(x, |g: &Graph<'_, T>, logits| batch_loss(&g.tape, logits, &labels, weights, loss))?;
    Ok((value.cast(), grads.iter().map(Tensor::cast).collect()))
}

/// Gradient of the mean batch loss of each micro-batch, in f64, with the
/// micro-batch loss values.
pub fn micro_batch_gradients(
    model: &ModelHandle<f64>,
    batch: &[&Sample],
    weights: &ClassWeights,
    loss: &LossConfig,
) -> Result<(f64, Vec<Tensor<f64>>)> {
    micro_batch(model, batch, weights, loss)
}

/// One pass over `batches`. Gradients of `accumulation_steps` consecutive
/// micro-batches are averaged before each optimizer step; a trailing
/// partial group is applied as one smaller step. Returns the mean
/// micro-batch loss and the number of optimizer steps.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &mut ModelHandle<f64>,
    optimizer: &mut AdaBelief<f64>,
    batches: &[Vec<&Sample>],
    weights: &ClassWeights,
    loss: &LossConfig,
    lr: f64,
    accumulation_steps: usize,
    precision: Precision,
) -> Result<(f64, usize)> {
    if batches.is_empty() {
        return Err(Error::NoBatches);
    }
    let accumulation_steps = accumulation_steps.max(1);
    let mut total = 0.0;
    let mut steps = 0;
    for (g, group) in batches.chunks(accumulation_steps).enumerate() {
        let mut acc = GradAccumulator::new();
        let low = (precision == Precision::Mixed).then(|| model.cast::<f32>());
        for (j, batch) in group.iter().enumerate() {
            let (value, grads) = match &low {
                Some(m) => micro_batch(m, batch, weights, loss)?,
                None => micro_batch(model, batch, weights, loss)?,
            };
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { batch: g * accumulation_steps + j, value });
            }
            total += value;
            acc.add(grads);
        }
        let mean = acc.take_mean().expect("group is non-empty");
        optimizer.step(model.params_mut(), &mean, lr)?;
        steps += 1;
    }
    Ok((total / batches.len() as f64, steps))
}

/// Mean per-image loss and confusion matrix over `samples`.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub confusion: ConfusionMatrix,
    pub samples: usize,
}

impl Evaluation {
    pub fn report(&self) -> Result<MetricsReport> {
        per_class_metrics(&self.confusion, self.samples)
    }
}

fn evaluate_in<T: Scalar>(
    model: &ModelHandle<T>,
    samples: &[Sample],
    weights: &ClassWeights,
    loss: &LossConfig,
    mut on_prediction: impl FnMut(&Sample, &LabelMap) -> Result<()>,
) -> Result<Evaluation> {
    let k = model.spec().num_classes;
    let mut confusion = ConfusionMatrix::new(k);
    let mut total = 0.0;
    let mut supervised = 0usize;
    for s in samples {
        let logits = model.forward(&s.cube)?;
        let pred = argmax_labels(&logits)?;
        confusion.accumulate(&pred, &s.labels)?;
        on_prediction(s, &pred)?;
        match crate::loss::combined_loss(&logits, &s.labels, weights, loss) {
            Ok(v) => {
                total += v.cast::<f64>();
                supervised += 1;
            }
            Err(Error::NoSupervisedPixels) => {}
            Err(e) => return Err(e),
        }
    }
    let loss = if supervised > 0 { total / supervised as f64 } else { f64::NAN };
    Ok(Evaluation { loss, confusion, samples: samples.len() })
}

/// Inference over `samples`; `on_prediction` sees every predicted label map.
pub fn evaluate_with(
    model: &ModelHandle<f64>,
    samples: &[Sample],
    weights: &ClassWeights,
    loss: &LossConfig,
    precision: Precision,
    on_prediction: impl FnMut(&Sample, &LabelMap) -> Result<()>,
) -> Result<Evaluation> {
    match precision {
        Precision::Full => evaluate_in(model, samples, weights, loss, on_prediction),
        Precision::Mixed => evaluate_in(&model.cast::<f32>(), samples, weights, loss, on_prediction),
    }
}

pub fn evaluate(
    model: &ModelHandle<f64>,
    samples: &[Sample],
    weights: &ClassWeights,
    loss: &LossConfig,
    precision: Precision,
) -> Result<Evaluation> {
    evaluate_with(model, samples, weights, loss, precision, |_, _| Ok(()))
}

/// Class weights from the pixel statistics of `samples`.
pub fn class_weights_for(samples: &[Sample], k: usize, mode: WeightMode) -> Result<ClassWeights> {
    let stats = compute_pixel_stats(samples.iter().map(|s| &s.labels), k)?;
    ClassWeights::from_counts(&stats.counts, mode)
}

/// Training and validation samples.
pub struct TrainData<'a> {
    pub train: &'a [Sample],
    pub val: &'a [Sample],
}

/// Complete training state; everything a checkpoint stores.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: ModelHandle<f64>,
    pub optimizer: AdaBelief<f64>,
    pub scheduler: Scheduler,
    pub weights: ClassWeights,
    pub history: Vec<EpochRecord>,
    pub best: Option<BestRecord>,
    pub provenance: BTreeMap<String, String>,
}

impl Trainer {
    pub fn new(config: TrainConfig, weights: ClassWeights) -> Result<Self> {
        config.validate()?;
        if weights.num_classes() != config.arch.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} class weights for {} classes",
                weights.num_classes(),
                config.arch.num_classes
            )));
        }
        let model = ModelHandle::build(&config.arch)?;
        let optimizer = AdaBelief::new(model.params(), config.optimizer);
        let scheduler = Scheduler::new(config.scheduler.clone());
        let mut provenance = BTreeMap::new();
        provenance.insert("arch.seed".into(), config.arch.seed.to_string());
        provenance.insert("data.seed".into(), config.seed.to_string());
        provenance.insert("precision".into(), config.precision.to_string());
        Ok(Self { config, model, optimizer, scheduler, weights, history: Vec::new(), best: None, provenance })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let model = ckpt.model()?;
        Ok(Self {
            config: ckpt.config,
            model,
            optimizer: ckpt.optimizer,
            scheduler: ckpt.scheduler,
            weights: ckpt.class_weights,
            history: ckpt.history,
            best: ckpt.best,
            provenance: ckpt.provenance,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epoch: self.epochs_done(),
            params: self.model.params().clone(),
            optimizer: self.optimizer.clone(),
            scheduler: self.scheduler.clone(),
            history: self.history.clone(),
            class_weights: self.weights.clone(),
            best: self.best,
            provenance: self.provenance.clone(),
        }
    }

    /// Runs one epoch plus validation; returns its record and whether it set
    /// a new best validation mIoU.
    pub fn run_epoch(&mut self, data: &TrainData<'_>) -> Result<(EpochRecord, bool)> {
        if data.val.is_empty() {
            return Err(Error::invalid("validation split is empty"));
        }
        let epoch = self.epochs_done() + 1;
        let order = epoch_order(self.config.seed, epoch, data.train.len(), self.config.shuffle);
        let batches: Vec<Vec<&Sample>> =
            order.chunks(self.config.batch_size).map(|c| c.iter().map(|&i| &data.train[i]).collect()).collect();
        let lr = self.scheduler.lr();
        let (train_loss, _) = train_epoch(
            &mut self.model,
            &mut self.optimizer,
            &batches,
            &self.weights,
            &self.config.loss,
            lr,
            self.config.accumulation_steps,
            self.config.precision,
        )?;
        let eval = evaluate(&self.model, data.val, &self.weights, &self.config.loss, self.config.precision)?;
        if !eval.loss.is_finite() {
            return Err(Error::NonFiniteLoss { batch: 0, value: eval.loss });
        }
        let val_miou = eval.report()?.mean_iou();
        self.scheduler.update(eval.loss)?;
        let record = EpochRecord { epoch, train_loss, val_loss: eval.loss, lr, val_miou };
        self.history.push(record);
        let improved = self.best.is_none_or(|b| val_miou > b.val_miou);
        if improved {
            self.best = Some(BestRecord { epoch, val_miou });
        }
        Ok((record, improved))
    }

    /// Runs the remaining epochs up to `config.epochs`, calling `on_epoch`
    /// after each one.
    pub fn run(
        &mut self,
        data: &TrainData<'_>,
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord, bool) -> Result<()>,
    ) -> Result<()> {
        while self.epochs_done() < self.config.epochs {
            let (record, improved) = self.run_epoch(data)?;
            on_epoch(self, &record, improved)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Trains for exactly `config.epochs` epochs. Class weights come from the
/// training split unless given.
pub fn fit(config: TrainConfig, data: &TrainData<'_>, weights: Option<ClassWeights>) -> Result<FitResult> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let weights = match weights {
        Some(w) => w,
        None => class_weights_for(data.train, config.arch.num_classes, config.weight_mode)?,
    };
    let mut trainer = Trainer::new(config, weights)?;
    let mut best = None;
    trainer.run(data, |t, _, improved| {
        if improved {
            best = Some(t.checkpoint());
        }
        Ok(())
    })?;
    let last = trainer.checkpoint();
    Ok(FitResult { best: best.expect("at least one epoch ran"), history: last.history.clone(), last })
}
