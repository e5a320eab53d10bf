use crate::config::RelabelSource;
use crate::data::{load_relabel, taxonomy_for};
use crate::CliError;
use hsiseg_core::dataset::{builtin_taxonomy, relabel, CanonicalDataset, PixelStats, RelabelMap};
use hsiseg_core::{kv, ClassTaxonomy};
use std::path::{Path, PathBuf};

/// A built-in taxonomy name, or a file holding `name = ...` and
/// `classes = a, b, c`.
fn load_taxonomy(arg: &str) -> Result<ClassTaxonomy, CliError> {
    if let Some(t) = builtin_taxonomy(arg) {
        return Ok(t);
    }
    let text = std::fs::read_to_string(arg).map_err(|e| CliError::config(format!("cannot read taxonomy {arg}: {e}")))?;
    let entries = kv::parse_unique(&text).map_err(|e| CliError::config(format!("taxonomy {arg}: {e}")))?;
    let mut name = None;
    let mut classes = None;
    for e in entries {
        match e.key.as_str() {
            "name" => name = Some(e.value),
            "classes" => classes = Some(e.value.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()),
            k => return Err(CliError::config(format!("taxonomy {arg}: unknown key `{k}` (line {})", e.line))),
        }
    }
    let classes = classes.ok_or_else(|| CliError::config(format!("taxonomy {arg}: missing `classes`")))?;
    ClassTaxonomy::new(name.unwrap_or_else(|| arg.to_string()), classes).map_err(|e| CliError::config(e.to_string()))
}

fn dataset_stats(ds: &CanonicalDataset, map: Option<&RelabelMap>, k: usize) -> Result<PixelStats, CliError> {
    let mut stats = PixelStats::new(k);
    for i in 0..ds.len() {
        let labels = ds.load_labels(i)?;
        match map {
            Some(m) => stats.add(&relabel(&labels, m)?)?,
            None => stats.add(&labels)?,
        }
    }
    Ok(stats)
}

pub fn cmd_stats(dirs: &[PathBuf], taxonomy: Option<&str>, relabel_arg: Option<&str>) -> Result<(), CliError> {
    let map = relabel_arg.map(|r| load_relabel(&RelabelSource::parse(r, Path::new(".")))).transpose()?.map(|(m, _)| m);
    let taxonomy = taxonomy.map(load_taxonomy).transpose()?;
    let mut union: Option<(PixelStats, ClassTaxonomy)> = None;
    let mut comparable = true;
    for dir in dirs {
        let ds = CanonicalDataset::open(dir)?;
        let d = ds.descriptor();
        let names = match &taxonomy {
            Some(t) => t.clone(),
            None => taxonomy_for(d, map.as_ref()),
        };
        let k = map.as_ref().map_or(d.num_classes, |m| m.target().num_classes());
        if names.num_classes() != k {
            return Err(CliError::config(format!("taxonomy {} has {} classes, dataset {} has {k}", names.name(), names.num_classes(), d.name)));
        }
        let stats = dataset_stats(&ds, map.as_ref(), k)?;
        println!("{} ({} images, {})", d.name, ds.len(), dir.display());
        print!("{}", stats.render(Some(&names)));
        println!();
        match &mut union {
            None => union = Some((stats, names)),
            Some((u, t)) if t.classes() == names.classes() => u.merge(&stats),
            Some(_) => comparable = false,
        }
    }
    if dirs.len() > 1 {
        match (union, comparable) {
            (Some((u, t)), true) => {
                println!("all datasets");
                print!("{}", u.render(Some(&t)));
            }
            _ => println!("datasets use different class sets; no combined table"),
        }
    }
    Ok(())
}
