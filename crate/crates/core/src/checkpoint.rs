//! Versioned binary checkpoints.
//!
//! Layout: `HSISEGCK` magic, u32 LE format version, u64 LE header length,
//! JSON header, then f64 LE blocks for parameters, AdaBelief `m` and `s`
//! (each in parameter order), and a SHA-256 of everything before it.

use crate::loss::ClassWeights;
use crate::models::{ArchSpec, ModelHandle};
use crate::optim::{AdaBelief, AdaBeliefConfig, Scheduler};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::train::{EpochRecord, TrainConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 8] = b"HSISEGCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub epoch: usize,
    pub val_miou: f64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub params: ParamStore<f64>,
    pub optimizer: AdaBelief<f64>,
    pub scheduler: Scheduler,
    pub history: Vec<EpochRecord>,
    pub class_weights: ClassWeights,
    pub best: Option<BestRecord>,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    epoch: usize,
    params: Vec<ParamMeta>,
    optimizer_config: AdaBeliefConfig,
    optimizer_step: u64,
    scheduler: Scheduler,
    history: Vec<EpochRecord>,
    class_weights: ClassWeights,
    best: Option<BestRecord>,
    provenance: BTreeMap<String, String>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            epoch: self.epoch,
            params: self.params.iter().map(|(_, n, v)| ParamMeta { name: n.to_string(), shape: v.shape().to_vec() }).collect(),
            optimizer_config: self.optimizer.config,
            optimizer_step: self.optimizer.t,
            scheduler: self.scheduler.clone(),
            history: self.history.clone(),
            class_weights: self.class_weights.clone(),
            best: self.best,
            provenance: self.provenance.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let blocks = self.params.iter().map(|(_, _, v)| v).chain(&self.optimizer.m).chain(&self.optimizer.s);
        for t in blocks {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file or truncated"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: CHECKPOINT_VERSION });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch (truncated or modified)"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| corrupt("header length"))?;
        let header: Header = serde_json::from_slice(&body[20..header_end]).map_err(|e| corrupt(format!("header: {e}")))?;
        let mut rest = &body[header_end..];
        let mut read_block = |shape: &[usize]| -> Result<Tensor<f64>> {
            let n: usize = shape.iter().product();
            if rest.len() < 8 * n {
                return Err(corrupt("parameter data truncated"));
            }
            let (head, tail) = rest.split_at(8 * n);
            rest = tail;
            let data = head.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            Tensor::from_vec(shape, data)
        };
        let mut params = ParamStore::new();
        for p in &header.params {
            params.push(p.name.clone(), read_block(&p.shape)?);
        }
        let m = header.params.iter().map(|p| read_block(&p.shape)).collect::<Result<Vec<_>>>()?;
        let s = header.params.iter().map(|p| read_block(&p.shape)).collect::<Result<Vec<_>>>()?;
        if !rest.is_empty() {
            return Err(corrupt("trailing data"));
        }
        Ok(Self {
            config: header.config,
            epoch: header.epoch,
            params,
            optimizer: AdaBelief { config: header.optimizer_config, m, s, t: header.optimizer_step },
            scheduler: header.scheduler,
            history: header.history,
            class_weights: header.class_weights,
            best: header.best,
            provenance: header.provenance,
        })
    }

    /// Writes atomically via a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Rebuilds the model and installs the stored parameters.
    pub fn model(&self) -> Result<ModelHandle<f64>> {
        let mut model = ModelHandle::build(&self.config.arch)?;
        model
            .set_params(self.params.clone())
            .map_err(|_| Error::CheckpointMismatch("stored parameters do not fit the stored architecture".into()))?;
        Ok(model)
    }

    /// Errors unless the checkpoint was trained for `arch`.
    pub fn check_arch(&self, arch: &ArchSpec) -> Result<()> {
        if &self.config.arch != arch {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint holds {} (C={}, K={}), config asks for {} (C={}, K={})",
                self.config.arch.family,
                self.config.arch.in_channels,
                self.config.arch.num_classes,
                arch.family,
                arch.in_channels,
                arch.num_classes
            )));
        }
        Ok(())
    }
}
