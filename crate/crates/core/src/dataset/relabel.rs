use crate::kv;
use crate::types::{ClassTaxonomy, LabelMap, IGNORE_ID};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Total map from source class ids `0..n` to target ids or ignore.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelabelMap {
    source: String,
    target: ClassTaxonomy,
    /// `mapping[s]` is the target id of source id `s`; `IGNORE_ID` for ignore.
    mapping: Vec<u8>,
}

/// Built-in target taxonomies, addressable by name from relabel files.
pub fn builtin_taxonomy(name: &str) -> Option<ClassTaxonomy> {
    match name {
        "consolidated" => Some(ClassTaxonomy::consolidated(false, false)),
        "consolidated+marking" => Some(ClassTaxonomy::consolidated(true, false)),
        "consolidated+marking+glass" => Some(ClassTaxonomy::consolidated(true, true)),
        "hsi-road" => Some(ClassTaxonomy::hsi_road()),
        _ => None,
    }
}

impl RelabelMap {
    pub fn new(source: impl Into<String>, target: ClassTaxonomy, mapping: Vec<u8>) -> Result<Self> {
        if mapping.is_empty() || mapping.len() > IGNORE_ID as usize {
            return Err(Error::invalid("relabel map needs 1..=255 source ids"));
        }
        if let Some(&bad) = mapping.iter().find(|&&t| t != IGNORE_ID && t as usize >= target.num_classes()) {
            return Err(Error::invalid(format!("target id {bad} outside taxonomy {:?}", target.name())));
        }
        Ok(Self { source: source.into(), target, mapping })
    }

    pub fn identity(taxonomy: &ClassTaxonomy) -> Self {
        let k = taxonomy.num_classes() as u8;
        Self { source: taxonomy.name().to_string(), target: taxonomy.clone(), mapping: (0..k).collect() }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &ClassTaxonomy {
        &self.target
    }

    pub fn source_classes(&self) -> usize {
        self.mapping.len()
    }

    /// Target of source id `s`: `Some(IGNORE_ID)` for ignore, `None` if unmapped.
    pub fn get(&self, s: u8) -> Option<u8> {
        if s == IGNORE_ID {
            return Some(IGNORE_ID);
        }
        self.mapping.get(s as usize).copied()
    }

    /// Parses a relabel file:
    ///
    /// ```text
    /// source = hs-city-v2
    /// target = consolidated          # built-in taxonomy name
    /// 0 = Road                       # target class by name ...
    /// 1 = 4                          # ... or by id
    /// 2 = ignore
    /// ```
    ///
    /// Source ids must be contiguous from 0. A `target.classes` entry with a
    /// comma-separated list defines a custom target taxonomy instead.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = kv::parse_unique(text)?;
        let mut source = None;
        let mut target_name = None;
        let mut custom = None;
        let mut pairs = Vec::new();
        for e in &entries {
            match e.key.as_str() {
                "source" => source = Some(e.value.clone()),
                "target" => target_name = Some(e.value.clone()),
                "target.classes" => custom = Some(e.value.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()),
                k => {
                    let id: u8 = k
                        .parse()
                        .ok()
                        .filter(|&id| id != IGNORE_ID)
                        .ok_or_else(|| Error::Format(format!("line {}: unknown key {k:?}", e.line)))?;
                    pairs.push((e.line, id, e.value.clone()));
                }
            }
        }
        let source = source.ok_or_else(|| Error::Format("relabel file lacks `source =`".into()))?;
        let target_name = target_name.ok_or_else(|| Error::Format("relabel file lacks `target =`".into()))?;
        let target = match custom {
            Some(classes) => ClassTaxonomy::new(target_name, classes)?,
            None => builtin_taxonomy(&target_name)
                .ok_or_else(|| Error::Format(format!("unknown target taxonomy {target_name:?}")))?,
        };
        pairs.sort_by_key(|p| p.1);
        let mut mapping = Vec::with_capacity(pairs.len());
        for (expect, (line, id, value)) in pairs.iter().enumerate() {
            if *id as usize != expect {
                return Err(Error::Format(format!("line {line}: source ids must be contiguous from 0; missing {expect}")));
            }
            let t = if value == "ignore" {
                IGNORE_ID
            } else if let Ok(n) = value.parse::<u8>() {
                n
            } else {
                target
                    .classes()
                    .iter()
                    .position(|c| c == value)
                    .ok_or_else(|| Error::Format(format!("line {line}: {value:?} is not a class of {}", target.name())))?
                    as u8
            };
            mapping.push(t);
        }
        Self::new(source, target, mapping)
    }

    /// Shipped default map for a source dataset family.
    pub fn builtin(source: &str) -> Option<Self> {
        Some(Self::parse(Self::builtin_text(source)?).expect("shipped relabel map parses"))
    }

    /// Source text of a shipped map.
    pub fn builtin_text(source: &str) -> Option<&'static str> {
        match source {
            "hyko2" => Some(include_str!("../../assets/relabel/hyko2.map")),
            "hsi-drive-v2" => Some(include_str!("../../assets/relabel/hsi-drive-v2.map")),
            "hs-city-v2" => Some(include_str!("../../assets/relabel/hs-city-v2.map")),
            _ => None,
        }
    }
}

/// Applies `map` pixelwise; ignore stays ignore.
pub fn relabel(labels: &LabelMap, map: &RelabelMap) -> Result<LabelMap> {
    let out = labels
        .labels()
        .iter()
        .map(|&l| map.get(l).ok_or(Error::UnmappedLabel(l)))
        .collect::<Result<Vec<u8>>>()?;
    LabelMap::new(labels.height(), labels.width(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn lm(v: &[u8]) -> LabelMap {
        LabelMap::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn identity_and_pointwise() {
        let t = ClassTaxonomy::numbered("t", 3).unwrap();
        let x = lm(&[0, 2, IGNORE_ID, 1]);
        assert_eq!(relabel(&x, &RelabelMap::identity(&t)).unwrap(), x);
        let m = RelabelMap::new("s", t, vec![0, 0, IGNORE_ID]).unwrap();
        assert_eq!(relabel(&lm(&[0, 1, 2, 1]), &m).unwrap().labels(), &[0, 0, IGNORE_ID, 0]);
        assert!(matches!(relabel(&lm(&[3]), &m), Err(Error::UnmappedLabel(3))));
    }

    #[test]
    fn shipped_maps_cover_native_class_counts() {
        for (name, k, target_k) in [("hyko2", 10, 7), ("hsi-drive-v2", 9, 8), ("hs-city-v2", 19, 6)] {
            let m = RelabelMap::builtin(name).unwrap();
            assert_eq!(m.source_classes(), k, "{name}");
            assert_eq!(m.target().num_classes(), target_k, "{name}");
        }
        assert!(RelabelMap::builtin("unknown").is_none());
    }

    #[test]
    fn hs_city_to_consolidated_exhaustive_scan() {
        let m = RelabelMap::builtin("hs-city-v2").unwrap();
        let all: Vec<u8> = (0..19).chain([IGNORE_ID]).cycle().take(400).collect();
        let out = relabel(&LabelMap::new(20, 20, all).unwrap(), &m).unwrap();
        assert!(out.labels().iter().all(|&l| l < 6 || l == IGNORE_ID));
    }

    #[test]
    fn parse_errors() {
        assert!(RelabelMap::parse("source = a\ntarget = consolidated\n0 = Road\n2 = Sky\n").is_err());
        assert!(RelabelMap::parse("source = a\ntarget = nope\n0 = 0\n").is_err());
        assert!(RelabelMap::parse("source = a\ntarget = consolidated\n0 = Lava\n").is_err());
        assert!(RelabelMap::parse("source = a\ntarget = consolidated\n0 = 9\n").is_err());
        let custom = RelabelMap::parse("source = a\ntarget = mine\ntarget.classes = x, y\n0 = y\n1 = ignore\n").unwrap();
        assert_eq!(custom.get(0), Some(1));
        assert_eq!(custom.get(1), Some(IGNORE_ID));
    }

    proptest! {
        #[test]
        fn never_increases_distinct_ids(
            mapping in prop::collection::vec(prop_oneof![0u8..4, Just(IGNORE_ID)], 1..8),
            seed_labels in prop::collection::vec(0u8..8, 1..40),
        ) {
            let t = ClassTaxonomy::numbered("t", 4).unwrap();
            let n = mapping.len() as u8;
            let m = RelabelMap::new("s", t, mapping).unwrap();
            let x = lm(&seed_labels.iter().map(|l| l % n).collect::<Vec<_>>());
            let y = relabel(&x, &m).unwrap();
            let distinct = |v: &[u8]| v.iter().filter(|&&l| l != IGNORE_ID).collect::<BTreeSet<_>>().len();
            prop_assert!(distinct(y.labels()) <= distinct(x.labels()));
        }
    }
}
