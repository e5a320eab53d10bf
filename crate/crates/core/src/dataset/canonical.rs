use crate::types::{validate_sample, DatasetDescriptor, HsiCube, LabelMap, Sample};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::invalid(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub cube: String,
    pub labels: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub descriptor: DatasetDescriptor,
    pub samples: Vec<SampleEntry>,
    /// Empty until a split is assigned; otherwise covers every sample.
    #[serde(default)]
    pub splits: BTreeMap<String, Split>,
}

impl DatasetManifest {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    /// Ids assigned to `split`, in manifest order.
    pub fn split_ids(&self, split: Split) -> Vec<&str> {
        self.ids().filter(|id| self.splits.get(*id) == Some(&split)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: self.format_version, supported: FORMAT_VERSION });
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.samples {
            if s.id.is_empty() || s.id.contains(['/', '\\']) {
                return Err(Error::Format(format!("invalid sample id {:?}", s.id)));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Format(format!("duplicate sample id {:?}", s.id)));
            }
        }
        if !self.splits.is_empty() {
            if self.splits.len() != self.samples.len() || self.splits.keys().any(|k| !seen.contains(k.as_str())) {
                return Err(Error::Format("split assignment must cover exactly the listed samples".into()));
            }
        }
        Ok(())
    }
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn cube_bytes(cube: &HsiCube) -> Vec<u8> {
    cube.values().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes every sample as `<id>.cube` (f32 LE, band-sequential), `<id>.labels`
/// (u8 row-major) and a `<id>.sha256` sidecar, then `manifest.json`.
pub fn write_canonical(
    samples: &[Sample],
    descriptor: &DatasetDescriptor,
    splits: BTreeMap<String, Split>,
    dir: &Path,
) -> Result<DatasetManifest> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        if let Some(v) = validate_sample(s, descriptor).into_iter().next() {
            return Err(Error::invalid(format!("sample {}: {v}", s.id)));
        }
        entries.push(SampleEntry { id: s.id.clone(), cube: format!("{}.cube", s.id), labels: format!("{}.labels", s.id) });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        descriptor: DatasetDescriptor { declared_image_count: samples.len(), ..descriptor.clone() },
        samples: entries,
        splits,
    };
    manifest.validate()?;
    fs::create_dir_all(dir)?;
    for (s, e) in samples.iter().zip(&manifest.samples) {
        let cube = cube_bytes(&s.cube);
        fs::write(dir.join(&e.cube), &cube)?;
        fs::write(dir.join(&e.labels), s.labels.labels())?;
        let sums = format!("{}  {}\n{}  {}\n", checksum(&cube), e.cube, checksum(s.labels.labels()), e.labels);
        fs::write(dir.join(format!("{}.sha256", s.id)), sums)?;
    }
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    manifest.validate()?;
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// A canonical dataset opened for lazy, per-sample reads.
#[derive(Clone, Debug)]
pub struct CanonicalDataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

/// Reads and checks the manifest; sample files are read on demand.
pub fn read_canonical(dir: &Path) -> Result<CanonicalDataset> {
    CanonicalDataset::open(dir)
}

impl CanonicalDataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingSampleFile(path.clone()),
            _ => Error::Io(e),
        })?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
        }
        let manifest: DatasetManifest = serde_json::from_value(raw)?;
        manifest.validate()?;
        Ok(Self { root: dir.to_path_buf(), manifest })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn descriptor(&self) -> &DatasetDescriptor {
        &self.manifest.descriptor
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    fn read_exact_len(&self, name: &str, expected: u64) -> Result<Vec<u8>> {
        let path = self.root.join(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingSampleFile(path.clone()),
            _ => Error::Io(e),
        })?;
        if bytes.len() as u64 != expected {
            return Err(Error::TruncatedFile { path, expected, found: bytes.len() as u64 });
        }
        Ok(bytes)
    }

    fn verify_sidecar(&self, id: &str, files: &[(&str, &[u8])]) -> Result<()> {
        let path = self.root.join(format!("{id}.sha256"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let Some((sum, name)) = line.split_once("  ") else {
                return Err(Error::Format(format!("{}: malformed checksum line", path.display())));
            };
            if let Some((_, bytes)) = files.iter().find(|(n, _)| *n == name.trim()) {
                if checksum(bytes) != sum.trim() {
                    return Err(Error::ChecksumMismatch(self.root.join(name.trim())));
                }
            }
        }
        Ok(())
    }

    /// Reads sample `index` from disk.
    pub fn load(&self, index: usize) -> Result<Sample> {
        let e = self
            .manifest
            .samples
            .get(index)
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))?;
        let d = &self.manifest.descriptor;
        let n = d.bands * d.height * d.width;
        let cube = self.read_exact_len(&e.cube, 4 * n as u64)?;
        let labels = self.read_exact_len(&e.labels, (d.height * d.width) as u64)?;
        self.verify_sidecar(&e.id, &[(&e.cube, &cube), (&e.labels, &labels)])?;
        let values = cube.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let mut c = HsiCube::new(d.bands, d.height, d.width, values)?;
        if let Some((lo, hi)) = d.wavelength_range_nm {
            c = c.with_wavelength_range(lo, hi)?;
        }
        Ok(Sample::new(e.id.clone(), c, LabelMap::new(d.height, d.width, labels)?))
    }

    /// Reads only the label map of sample `index`.
    pub fn load_labels(&self, index: usize) -> Result<LabelMap> {
        let e = self
            .manifest
            .samples
            .get(index)
            .ok_or_else(|| Error::invalid(format!("sample index {index} out of range")))?;
        let d = &self.manifest.descriptor;
        let labels = self.read_exact_len(&e.labels, (d.height * d.width) as u64)?;
        self.verify_sidecar(&e.id, &[(&e.labels, &labels)])?;
        LabelMap::new(d.height, d.width, labels)
    }

    pub fn load_id(&self, id: &str) -> Result<Sample> {
        let i = self
            .manifest
            .samples
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::invalid(format!("unknown sample id {id:?}")))?;
        self.load(i)
    }

    /// Indices of the samples in `split`, in manifest order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.manifest.splits.get(&self.manifest.samples[i].id) == Some(&split)).collect()
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.split_indices(split).into_iter().map(|i| self.load(i)).collect()
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}
