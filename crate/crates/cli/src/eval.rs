use crate::data::DataSpec;
use crate::lock::RunLock;
use crate::palette::write_label_png;
use crate::CliError;
use hsiseg_core::checkpoint::Checkpoint;
use hsiseg_core::dataset::{CanonicalDataset, Split};
use hsiseg_core::metrics::{render_report_table, ReportFormat, ReportRow};
use hsiseg_core::train::evaluate_with;
use std::fmt::Write;
use std::fs;
use std::path::Path;

pub const EVAL_DIR: &str = "eval";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

pub fn cmd_eval(checkpoint: &Path, dataset: &Path, split: Split, dump: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let run_dir = match out {
        Some(d) => d.to_path_buf(),
        None => checkpoint.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf(),
    };
    let ds = CanonicalDataset::open(dataset)?;
    let d = ds.descriptor();
    let spec = DataSpec::from_provenance(&ck.provenance)?;
    let arch = &ck.config.arch;
    let k = spec.num_classes(d);
    if arch.in_channels != d.bands || arch.num_classes != k {
        return Err(CliError::mismatch(format!(
            "checkpoint expects C={}, K={}; dataset {} gives C={}, K={k}",
            arch.in_channels, arch.num_classes, d.name, d.bands
        )));
    }
    if let Some((h, w)) = spec.subsample {
        if h > d.height || w > d.width {
            return Err(CliError::mismatch(format!("checkpoint subsamples to {h}x{w}, larger than the dataset's {}x{}", d.height, d.width)));
        }
    }
    let _lock = RunLock::acquire(&run_dir)?;
    let assignment = spec.assignment(&ds)?;
    let samples = spec.load(&ds, &assignment, split)?;
    if samples.is_empty() {
        return Err(CliError::config(format!("split {} of {} is empty", split.name(), d.name)));
    }
    if let Some(dir) = dump {
        fs::create_dir_all(dir)?;
    }
    let model = ck.model()?;
    let mut dump_err = None;
    let evaluation = evaluate_with(&model, &samples, &ck.class_weights, &ck.config.loss, ck.config.precision, |s, pred| {
        if let Some(dir) = dump {
            if let Err(e) = write_label_png(&dir.join(format!("{}.png", s.id)), pred) {
                dump_err.get_or_insert(e);
            }
        }
        Ok(())
    })?;
    if let Some(e) = dump_err {
        return Err(e);
    }
    let report = evaluation.report()?;
    let names = spec.class_names(d);
    let model_name = arch.family.display_name().to_string();

    let row = ReportRow { dataset: d.name.clone(), model: model_name.clone(), metrics: report.mean.values().map(Some) };
    let mut text = String::new();
    let _ = writeln!(text, "dataset: {} ({})", d.name, dataset.display());
    let _ = writeln!(text, "model: {model_name} (epoch {})", ck.epoch);
    let _ = writeln!(text, "split: {}", split.name());
    let _ = writeln!(text, "loss: {:?}", evaluation.loss);
    text.push_str(&report.render_text(&names));

    let eval_dir = run_dir.join(EVAL_DIR);
    fs::create_dir_all(&eval_dir)?;
    fs::write(eval_dir.join(REPORT_CSV), render_report_table(&[row], ReportFormat::Csv))?;
    fs::write(eval_dir.join(REPORT_TXT), &text)?;
    print!("{text}");
    Ok(())
}
