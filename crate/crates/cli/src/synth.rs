use crate::CliError;
use hsiseg_core::dataset::{generate_synthetic, split_dataset, write_canonical, write_manifest, SynthConfig, DEFAULT_RATIOS};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Generator-side pixel counts written next to the dataset.
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::config(e.to_string().trim_start_matches("invalid argument: ").to_string()))?;
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        return Err(CliError::config(format!("output directory {} is not empty", out.display())));
    }
    let d = generate_synthetic(cfg)?;
    let mut manifest = write_canonical(&d.samples, &d.descriptor, BTreeMap::new(), out)?;
    if cfg.count >= 3 {
        manifest = split_dataset(&manifest, DEFAULT_RATIOS, cfg.seed)?;
        write_manifest(&manifest, out)?;
    }
    let truth = serde_json::json!({
        "config": cfg,
        "classes": d.taxonomy.classes(),
        "counts": d.counts.counts,
        "ignored": d.counts.ignored,
    });
    let mut text = serde_json::to_string_pretty(&truth).map_err(|e| CliError::input(e.to_string()))?;
    text.push('\n');
    fs::write(out.join(GROUND_TRUTH_FILE), text)?;
    println!("wrote {} samples ({}x{}, {} bands, {} classes) to {}", cfg.count, cfg.height, cfg.width, cfg.bands, cfg.classes, out.display());
    Ok(())
}
