//! Dataset preparation shared by `train` and `eval`: relabeling,
//! subsampling and split assignment, recorded in checkpoint provenance so
//! evaluation sees the data exactly as training did.

use crate::config::{RelabelSource, RunConfig};
use crate::CliError;
use hsiseg_core::dataset::{builtin_taxonomy, relabel, split_dataset, CanonicalDataset, RelabelMap, Split};
use hsiseg_core::types::subsample_spatial;
use hsiseg_core::{ClassTaxonomy, DatasetDescriptor, Sample};
use std::collections::BTreeMap;

pub const PROV_DATASET: &str = "dataset.name";
pub const PROV_DATASET_PATH: &str = "dataset.path";
pub const PROV_RELABEL: &str = "relabel.map";
pub const PROV_SUBSAMPLE: &str = "subsample";
pub const PROV_SPLIT: &str = "split.ratios";
pub const PROV_SPLIT_SEED: &str = "split.seed";

/// How raw dataset samples become training/evaluation samples.
#[derive(Clone, Debug)]
pub struct DataSpec {
    pub relabel: Option<(RelabelMap, String)>,
    pub subsample: Option<(usize, usize)>,
    pub split_ratios: Option<(f64, f64, f64)>,
    pub split_seed: u64,
}

/// Reads and parses a relabel map; malformed maps are config errors.
pub fn load_relabel(source: &RelabelSource) -> Result<(RelabelMap, String), CliError> {
    let text = source.text()?;
    let map = RelabelMap::parse(&text).map_err(|e| CliError::config(format!("relabel map: {e}")))?;
    Ok((map, text))
}

impl DataSpec {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Self {
            relabel: cfg.relabel.as_ref().map(load_relabel).transpose()?,
            subsample: cfg.subsample,
            split_ratios: cfg.split_ratios,
            split_seed: cfg.split_seed,
        })
    }

    /// Entries describing the prepared data, stored with checkpoints.
    pub fn provenance(&self) -> BTreeMap<String, String> {
        let mut p = BTreeMap::new();
        if let Some((_, text)) = &self.relabel {
            p.insert(PROV_RELABEL.into(), text.clone());
        }
        if let Some((h, w)) = self.subsample {
            p.insert(PROV_SUBSAMPLE.into(), format!("{h}x{w}"));
        }
        p.insert(
            PROV_SPLIT.into(),
            match self.split_ratios {
                None => "manifest".into(),
                Some((a, b, c)) => format!("{a:?}, {b:?}, {c:?}"),
            },
        );
        p.insert(PROV_SPLIT_SEED.into(), self.split_seed.to_string());
        p
    }

    pub fn from_provenance(p: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let bad = |k: &str| CliError::input(format!("checkpoint provenance entry `{k}` is malformed"));
        let relabel = match p.get(PROV_RELABEL) {
            None => None,
            Some(text) => Some((RelabelMap::parse(text).map_err(|_| bad(PROV_RELABEL))?, text.clone())),
        };
        let subsample = match p.get(PROV_SUBSAMPLE) {
            None => None,
            Some(v) => {
                let (h, w) = v.split_once('x').ok_or_else(|| bad(PROV_SUBSAMPLE))?;
                Some((h.parse().map_err(|_| bad(PROV_SUBSAMPLE))?, w.parse().map_err(|_| bad(PROV_SUBSAMPLE))?))
            }
        };
        let split_ratios = match p.get(PROV_SPLIT).map(String::as_str) {
            None | Some("manifest") => None,
            Some(v) => {
                let r: Vec<f64> = v.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad(PROV_SPLIT))?;
                match r.as_slice() {
                    &[a, b, c] => Some((a, b, c)),
                    _ => return Err(bad(PROV_SPLIT)),
                }
            }
        };
        let split_seed = match p.get(PROV_SPLIT_SEED) {
            None => 0,
            Some(v) => v.parse().map_err(|_| bad(PROV_SPLIT_SEED))?,
        };
        Ok(Self { relabel, subsample, split_ratios, split_seed })
    }

    /// Class count seen by the model.
    pub fn num_classes(&self, descriptor: &DatasetDescriptor) -> usize {
        self.relabel.as_ref().map_or(descriptor.num_classes, |(m, _)| m.target().num_classes())
    }

    pub fn class_names(&self, descriptor: &DatasetDescriptor) -> Vec<String> {
        taxonomy_for(descriptor, self.relabel.as_ref().map(|(m, _)| m)).classes().to_vec()
    }

    /// Split membership for every sample id.
    pub fn assignment(&self, ds: &CanonicalDataset) -> Result<BTreeMap<String, Split>, CliError> {
        match self.split_ratios {
            None if ds.manifest().splits.is_empty() => {
                Err(CliError::input(format!("dataset {} has no stored split", ds.root().display())))
            }
            None => Ok(ds.manifest().splits.clone()),
            Some(r) => Ok(split_dataset(ds.manifest(), r, self.split_seed)?.splits),
        }
    }

    /// Loads one split, relabeled and subsampled, in manifest order.
    pub fn load(&self, ds: &CanonicalDataset, assignment: &BTreeMap<String, Split>, split: Split) -> Result<Vec<Sample>, CliError> {
        let mut out = Vec::new();
        for (i, e) in ds.manifest().samples.iter().enumerate() {
            if assignment.get(&e.id) != Some(&split) {
                continue;
            }
            let mut s = ds.load(i)?;
            if let Some((map, _)) = &self.relabel {
                s.labels = relabel(&s.labels, map)?;
            }
            if let Some(hw) = self.subsample {
                s = subsample_spatial(&s, hw)?;
            }
            out.push(s);
        }
        Ok(out)
    }
}

/// Class names for a dataset: the relabel target, else the built-in
/// taxonomy the descriptor names (when its size fits), else numbered.
pub fn taxonomy_for(descriptor: &DatasetDescriptor, map: Option<&RelabelMap>) -> ClassTaxonomy {
    if let Some(m) = map {
        return m.target().clone();
    }
    builtin_taxonomy(&descriptor.taxonomy)
        .filter(|t| t.num_classes() == descriptor.num_classes)
        .unwrap_or_else(|| ClassTaxonomy::numbered(descriptor.taxonomy.clone(), descriptor.num_classes).expect("K ≥ 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_round_trip() {
        let map = RelabelMap::builtin("hs-city-v2").unwrap();
        let text = RelabelMap::builtin_text("hs-city-v2").unwrap().to_string();
        let spec = DataSpec { relabel: Some((map.clone(), text)), subsample: Some((355, 472)), split_ratios: Some((0.6, 0.2, 0.2)), split_seed: 4 };
        let back = DataSpec::from_provenance(&spec.provenance()).unwrap();
        assert_eq!(back.relabel.unwrap().0, map);
        assert_eq!(back.subsample, Some((355, 472)));
        assert_eq!(back.split_ratios, Some((0.6, 0.2, 0.2)));
        assert_eq!(back.split_seed, 4);
        let plain = DataSpec { relabel: None, subsample: None, split_ratios: None, split_seed: 0 };
        let back = DataSpec::from_provenance(&plain.provenance()).unwrap();
        assert!(back.relabel.is_none() && back.subsample.is_none() && back.split_ratios.is_none());
    }
}
