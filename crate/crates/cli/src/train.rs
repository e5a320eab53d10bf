use crate::config::{RawConfig, RunConfig};
use crate::data::{DataSpec, PROV_DATASET, PROV_DATASET_PATH};
use crate::lock::RunLock;
use crate::CliError;
use hsiseg_core::checkpoint::Checkpoint;
use hsiseg_core::dataset::{CanonicalDataset, Split};
use hsiseg_core::train::{class_weights_for, history_csv, TrainData, Trainer};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const CONFIG_FILE: &str = "config.resolved";
pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

fn check_resume(ck: &Checkpoint, cfg: &RunConfig, provenance: &BTreeMap<String, String>) -> Result<(), CliError> {
    let mut stored = ck.config.clone();
    stored.epochs = cfg.train.epochs;
    if stored != cfg.train {
        return Err(CliError::mismatch("checkpoint was trained with a different configuration (only `epochs` may change on resume)"));
    }
    for (key, value) in provenance.iter().filter(|(k, _)| k.as_str() != PROV_DATASET_PATH) {
        if ck.provenance.get(key) != Some(value) {
            return Err(CliError::mismatch(format!("checkpoint was trained with a different `{key}`")));
        }
    }
    if ck.epoch > cfg.train.epochs {
        return Err(CliError::mismatch(format!("checkpoint has {} epochs, config asks for {}", ck.epoch, cfg.train.epochs)));
    }
    Ok(())
}

pub fn cmd_train(config: &Path, out: &Path, resume: Option<&Path>) -> Result<(), CliError> {
    let raw = RawConfig::load(config)?;
    let ds = CanonicalDataset::open(&raw.dataset_path()?)?;
    let relabel_map = raw.relabel_source().map(|s| crate::data::load_relabel(&s)).transpose()?;
    let k = relabel_map.as_ref().map_or(ds.descriptor().num_classes, |(m, _)| m.target().num_classes());
    let cfg = RunConfig::resolve(&raw, ds.descriptor(), k, !ds.manifest().splits.is_empty())?;
    let spec = DataSpec::from_config(&cfg)?;

    let _lock = RunLock::acquire(out)?;
    let mut provenance = spec.provenance();
    provenance.insert(PROV_DATASET.into(), ds.descriptor().name.clone());
    provenance.insert(PROV_DATASET_PATH.into(), cfg.dataset_path.display().to_string());

    let assignment = spec.assignment(&ds)?;
    let train = spec.load(&ds, &assignment, Split::Train)?;
    let val = spec.load(&ds, &assignment, Split::Val)?;
    if train.is_empty() || val.is_empty() {
        return Err(CliError::config("training needs non-empty train and val splits"));
    }

    let mut trainer = match resume {
        None => {
            if out.join(LAST_CHECKPOINT).exists() || out.join(HISTORY_FILE).exists() {
                return Err(CliError::config(format!(
                    "{} already holds a run; pass --resume {} to continue it",
                    out.display(),
                    out.join(LAST_CHECKPOINT).display()
                )));
            }
            let weights = class_weights_for(&train, k, cfg.train.weight_mode)?;
            let mut t = Trainer::new(cfg.train.clone(), weights)?;
            t.provenance.extend(provenance);
            t
        }
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            check_resume(&ck, &cfg, &provenance)?;
            let mut t = Trainer::from_checkpoint(ck)?;
            t.config.epochs = cfg.train.epochs;
            t
        }
    };
    fs::write(out.join(CONFIG_FILE), cfg.render())?;
    println!(
        "training {} on {} ({} train / {} val images), epochs {}..={}",
        cfg.train.arch.family.display_name(),
        ds.descriptor().name,
        train.len(),
        val.len(),
        trainer.epochs_done() + 1,
        cfg.train.epochs
    );

    let data = TrainData { train: &train, val: &val };
    trainer.run(&data, |t, rec, improved| {
        fs::write(out.join(HISTORY_FILE), history_csv(&t.history))?;
        let ck = t.checkpoint();
        ck.save(&out.join(LAST_CHECKPOINT))?;
        if improved {
            ck.save(&out.join(BEST_CHECKPOINT))?;
        }
        println!(
            "epoch {:>4}  train_loss {:.6}  val_loss {:.6}  val_mIoU {:.4}  lr {:.3e}{}",
            rec.epoch,
            rec.train_loss,
            rec.val_loss,
            rec.val_miou,
            rec.lr,
            if improved { "  *" } else { "" }
        );
        Ok(())
    })?;
    if let Some(b) = trainer.best {
        println!("best val mIoU {:.4} at epoch {}", b.val_miou, b.epoch);
    }
    Ok(())
}
