//! Run configuration files.
//!
//! Flat `key = value` lines with dotted keys; `#` starts a comment. Every
//! key is optional except `dataset.path`; unknown keys are rejected. Lists
//! are comma-separated; spatial sizes are written `HxW`.
//!
//! ```text
//! dataset.path = data/hsi-drive       # relative to this file
//! dataset.relabel = hsi-drive-v2      # shipped map name or a map file
//! arch.family = unet_cbam
//! lr = 6e-4
//! batch_size = 16
//! ```
//!
//! Defaults not given in the file are taken from the per-dataset training
//! table (keyed on the dataset name in the manifest) and written back in
//! the resolved config, which reproduces the run when fed back.

use crate::CliError;
use hsiseg_core::dataset::{DEFAULT_RATIOS, RelabelMap};
use hsiseg_core::kv;
use hsiseg_core::loss::WeightMode;
use hsiseg_core::optim::RestartMode;
use hsiseg_core::{ArchFamily, ArchSpec, DatasetDescriptor, Precision, TrainConfig};
use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

/// Every accepted key, in the order the resolved config is written.
pub const KEYS: &[&str] = &[
    "dataset.path",
    "dataset.relabel",
    "dataset.subsample",
    "split.ratios",
    "split.seed",
    "arch.family",
    "arch.base_width",
    "arch.depth",
    "arch.attention_reduction",
    "arch.aspp_rates",
    "arch.aspp_pooling",
    "arch.seed",
    "activation_slope",
    "epochs",
    "batch_size",
    "accumulation_steps",
    "precision",
    "seed",
    "shuffle",
    "lr",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.epsilon",
    "scheduler.patience",
    "scheduler.factor",
    "scheduler.min_lr",
    "scheduler.restart_fraction",
    "scheduler.restart_mode",
    "loss.ce_coefficient",
    "loss.dice_coefficient",
    "loss.epsilon",
    "loss.class_weights",
];

/// Parsed file contents before dataset-dependent defaults are applied.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let entries = kv::parse_unique(text).map_err(|e| CliError::config(e.to_string()))?;
        let mut values = BTreeMap::new();
        for e in entries {
            if !KEYS.contains(&e.key.as_str()) {
                return Err(CliError::config(format!("unknown config key `{}` (line {})", e.key, e.line)));
            }
            values.insert(e.key, e.value);
        }
        Ok(Self { values, base_dir: base_dir.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Dataset directory, resolved against the config file's directory.
    pub fn dataset_path(&self) -> Result<PathBuf, CliError> {
        let p = self.get("dataset.path").ok_or_else(|| CliError::config("config lacks `dataset.path`"))?;
        let p = Path::new(p);
        Ok(if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) })
    }

    pub fn relabel_source(&self) -> Option<RelabelSource> {
        self.get("dataset.relabel").map(|v| RelabelSource::parse(v, &self.base_dir))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::config(format!("invalid value {v:?} for `{key}`"))),
        }
    }
}

/// Batch size and accumulation steps used by default for a dataset.
pub fn table_defaults(dataset_name: &str) -> (usize, usize) {
    match dataset_name {
        "HyKo2-NIR" => (8, 2),
        "HS-City v2" => (8, 4),
        _ => (16, 2),
    }
}

/// Where the relabel map comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum RelabelSource {
    Builtin(String),
    File(PathBuf),
}

impl RelabelSource {
    pub fn parse(value: &str, base_dir: &Path) -> Self {
        if RelabelMap::builtin_text(value).is_some() {
            RelabelSource::Builtin(value.to_string())
        } else {
            let p = Path::new(value);
            RelabelSource::File(if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) })
        }
    }

    /// Map text: the shipped file or the file on disk.
    pub fn text(&self) -> Result<String, CliError> {
        match self {
            RelabelSource::Builtin(name) => Ok(RelabelMap::builtin_text(name).unwrap_or_default().to_string()),
            RelabelSource::File(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read relabel map {}: {e}", p.display()))),
        }
    }

    fn render(&self) -> String {
        match self {
            RelabelSource::Builtin(n) => n.clone(),
            RelabelSource::File(p) => p.display().to_string(),
        }
    }
}

/// A fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub relabel: Option<RelabelSource>,
    pub subsample: Option<(usize, usize)>,
    /// `None` keeps the split stored in the dataset manifest.
    pub split_ratios: Option<(f64, f64, f64)>,
    pub split_seed: u64,
    pub train: TrainConfig,
}

fn parse_hw(v: &str) -> Option<(usize, usize)> {
    let (h, w) = v.split_once('x')?;
    Some((h.trim().parse().ok()?, w.trim().parse().ok()?))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::config(format!("invalid list {v:?} for `{key}`"))))
        .collect()
}

impl RunConfig {
    /// Applies defaults. `descriptor` is the dataset's (before any
    /// subsampling), `num_classes` the class count after relabeling, and
    /// `stored_split` whether the manifest carries a split assignment.
    pub fn resolve(
        raw: &RawConfig,
        descriptor: &DatasetDescriptor,
        num_classes: usize,
        stored_split: bool,
    ) -> Result<Self, CliError> {
        let family: ArchFamily = raw.parsed("arch.family", ArchFamily::UNet)?;
        let mut arch = ArchSpec::new(family, descriptor.bands, num_classes);
        arch.base_width = raw.parsed("arch.base_width", arch.base_width)?;
        arch.depth = raw.parsed("arch.depth", arch.depth)?;
        arch.attention_reduction = raw.parsed("arch.attention_reduction", arch.attention_reduction)?;
        if let Some(v) = raw.get("arch.aspp_rates") {
            arch.aspp_rates = parse_list("arch.aspp_rates", v)?;
        }
        arch.aspp_pooling = raw.parsed("arch.aspp_pooling", arch.aspp_pooling)?;
        arch.seed = raw.parsed("arch.seed", arch.seed)?;
        arch.activation_slope = raw.parsed("activation_slope", arch.activation_slope)?;

        let (batch, steps) = table_defaults(&descriptor.name);
        let mut t = TrainConfig::new(arch);
        t.epochs = raw.parsed("epochs", t.epochs)?;
        t.batch_size = raw.parsed("batch_size", batch)?;
        t.accumulation_steps = raw.parsed("accumulation_steps", steps)?;
        t.precision = raw.parsed::<Precision>("precision", t.precision)?;
        t.seed = raw.parsed("seed", t.seed)?;
        t.shuffle = raw.parsed("shuffle", t.shuffle)?;
        t.scheduler.base_lr = raw.parsed("lr", t.scheduler.base_lr)?;
        t.optimizer.beta1 = raw.parsed("optimizer.beta1", t.optimizer.beta1)?;
        t.optimizer.beta2 = raw.parsed("optimizer.beta2", t.optimizer.beta2)?;
        t.optimizer.epsilon = raw.parsed("optimizer.epsilon", t.optimizer.epsilon)?;
        t.scheduler.patience = raw.parsed("scheduler.patience", t.scheduler.patience)?;
        t.scheduler.factor = raw.parsed("scheduler.factor", t.scheduler.factor)?;
        t.scheduler.min_lr = raw.parsed("scheduler.min_lr", t.scheduler.min_lr)?;
        t.scheduler.restart_fraction = raw.parsed("scheduler.restart_fraction", t.scheduler.restart_fraction)?;
        t.scheduler.restart_mode = raw.parsed::<RestartMode>("scheduler.restart_mode", t.scheduler.restart_mode)?;
        t.loss.ce_coefficient = raw.parsed("loss.ce_coefficient", t.loss.ce_coefficient)?;
        t.loss.dice_coefficient = raw.parsed("loss.dice_coefficient", t.loss.dice_coefficient)?;
        t.loss.epsilon = raw.parsed("loss.epsilon", t.loss.epsilon)?;
        t.weight_mode = match raw.get("loss.class_weights") {
            None | Some("inverse_frequency") => WeightMode::InverseFrequency,
            Some("median_frequency") => WeightMode::MedianFrequency,
            Some(v) => return Err(CliError::config(format!("invalid value {v:?} for `loss.class_weights`"))),
        };
        t.validate().map_err(|e| CliError::config(e.to_string()))?;

        let split_ratios = match raw.get("split.ratios") {
            None if stored_split => None,
            None => Some(DEFAULT_RATIOS),
            Some("manifest") if stored_split => None,
            Some("manifest") => return Err(CliError::config("`split.ratios = manifest` but the dataset has no stored split")),
            Some(v) => match parse_list::<f64>("split.ratios", v)?.as_slice() {
                &[a, b, c] if [a, b, c].iter().all(|r| r.is_finite() && *r > 0.0) && ((a + b + c) - 1.0).abs() < 1e-9 => Some((a, b, c)),
                _ => return Err(CliError::config("`split.ratios` needs three positive values summing to 1")),
            },
        };
        let subsample = match raw.get("dataset.subsample") {
            None => None,
            Some(v) => Some(parse_hw(v).ok_or_else(|| CliError::config(format!("invalid size {v:?} for `dataset.subsample`")))?),
        };
        if let Some((h, w)) = subsample {
            if h == 0 || w == 0 || h > descriptor.height || w > descriptor.width {
                return Err(CliError::config(format!("`dataset.subsample` {h}x{w} must fit inside the dataset size")));
            }
        }
        let dataset_path = raw.dataset_path()?;
        let dataset_path = dataset_path.canonicalize().unwrap_or(dataset_path);
        Ok(Self {
            dataset_path,
            relabel: raw.relabel_source(),
            subsample,
            split_ratios,
            split_seed: raw.parsed("split.seed", 0)?,
            train: t,
        })
    }

    /// Every key with its value; parsing this text reproduces `self`.
    pub fn render(&self) -> String {
        let t = &self.train;
        let a = &t.arch;
        let mut v: BTreeMap<&str, String> = BTreeMap::new();
        v.insert("dataset.path", self.dataset_path.display().to_string());
        if let Some(r) = &self.relabel {
            v.insert("dataset.relabel", r.render());
        }
        if let Some((h, w)) = self.subsample {
            v.insert("dataset.subsample", format!("{h}x{w}"));
        }
        v.insert(
            "split.ratios",
            match self.split_ratios {
                None => "manifest".into(),
                Some((r0, r1, r2)) => format!("{r0:?}, {r1:?}, {r2:?}"),
            },
        );
        v.insert("split.seed", self.split_seed.to_string());
        v.insert("arch.family", a.family.to_string());
        v.insert("arch.base_width", a.base_width.to_string());
        v.insert("arch.depth", a.depth.to_string());
        v.insert("arch.attention_reduction", a.attention_reduction.to_string());
        v.insert("arch.aspp_rates", a.aspp_rates.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", "));
        v.insert("arch.aspp_pooling", a.aspp_pooling.to_string());
        v.insert("arch.seed", a.seed.to_string());
        v.insert("activation_slope", format!("{:?}", a.activation_slope));
        v.insert("epochs", t.epochs.to_string());
        v.insert("batch_size", t.batch_size.to_string());
        v.insert("accumulation_steps", t.accumulation_steps.to_string());
        v.insert("precision", t.precision.to_string());
        v.insert("seed", t.seed.to_string());
        v.insert("shuffle", t.shuffle.to_string());
        v.insert("lr", format!("{:?}", t.scheduler.base_lr));
        v.insert("optimizer.beta1", format!("{:?}", t.optimizer.beta1));
        v.insert("optimizer.beta2", format!("{:?}", t.optimizer.beta2));
        v.insert("optimizer.epsilon", format!("{:?}", t.optimizer.epsilon));
        v.insert("scheduler.patience", t.scheduler.patience.to_string());
        v.insert("scheduler.factor", format!("{:?}", t.scheduler.factor));
        v.insert("scheduler.min_lr", format!("{:?}", t.scheduler.min_lr));
        v.insert("scheduler.restart_fraction", format!("{:?}", t.scheduler.restart_fraction));
        v.insert(
            "scheduler.restart_mode",
            match t.scheduler.restart_mode {
                RestartMode::Geometric => "geometric",
                RestartMode::Constant => "constant",
            }
            .into(),
        );
        v.insert("loss.ce_coefficient", format!("{:?}", t.loss.ce_coefficient));
        v.insert("loss.dice_coefficient", format!("{:?}", t.loss.dice_coefficient));
        v.insert("loss.epsilon", format!("{:?}", t.loss.epsilon));
        v.insert(
            "loss.class_weights",
            match t.weight_mode {
                WeightMode::InverseFrequency => "inverse_frequency",
                WeightMode::MedianFrequency => "median_frequency",
            }
            .into(),
        );
        let mut s = String::from("# resolved run configuration\n");
        for k in KEYS {
            if let Some(val) = v.get(k) {
                let _ = writeln!(s, "{k} = {val}");
            }
        }
        s
    }
}
