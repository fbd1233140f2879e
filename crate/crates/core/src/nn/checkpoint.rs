use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchitectureConfig, Model, RunningStats};
use crate::error::{Error, Result};
use crate::tensor::{OptimizerState, Tensor};

/// File signature; the trailing digits are the format version.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SGCKPT01";

/// How the model's inputs were transformed during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefenseMeta {
    /// Block side M, or `None` for an undefended model.
    pub block_size: Option<usize>,
    /// Fingerprint of the secret key, never the key itself.
    pub key_fingerprint: Option<String>,
}

impl DefenseMeta {
    pub fn none() -> Self {
        Self {
            block_size: None,
            key_fingerprint: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    architecture: ArchitectureConfig,
    defense: DefenseMeta,
    epoch: usize,
    seed: u64,
    optimizer: Option<OptimizerState>,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

/// Model parameters, batch-norm running statistics, optimizer state and
/// provenance. On disk: magic, little-endian `u64` header length, JSON
/// header, then every tensor as little-endian `f32` in header order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: ArchitectureConfig,
    pub defense: DefenseMeta,
    pub epoch: usize,
    pub seed: u64,
    pub params: Vec<(String, Tensor<f32>)>,
    pub running: Vec<RunningStats<f32>>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_model(
        model: &Model<f32>,
        defense: DefenseMeta,
        epoch: usize,
        seed: u64,
        optimizer: Option<&OptimizerState>,
    ) -> Self {
        Self {
            architecture: model.config().clone(),
            defense,
            epoch,
            seed,
            params: model
                .param_names()
                .iter()
                .cloned()
                .zip(model.params().iter().cloned())
                .collect(),
            running: model.running_stats().to_vec(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = Model::build(self.architecture.clone(), self.seed)?;
        for ((name, _), expected) in self.params.iter().zip(model.param_names()) {
            if name != expected {
                return Err(Error::Checkpoint(format!(
                    "parameter {name:?} where {expected:?} was expected"
                )));
            }
        }
        model.load_state(
            self.params.iter().map(|(_, t)| t.clone()).collect(),
            self.running.clone(),
        )?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        let mut blobs: Vec<&[f32]> = Vec::new();
        for (name, t) in &self.params {
            entries.push(Entry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            });
            blobs.push(t.data());
        }
        for (i, r) in self.running.iter().enumerate() {
            entries.push(Entry {
                name: format!("bn{i}.running_mean"),
                shape: vec![r.mean.len()],
            });
            blobs.push(&r.mean);
            entries.push(Entry {
                name: format!("bn{i}.running_var"),
                shape: vec![r.var.len()],
            });
            blobs.push(&r.var);
        }
        if let Some(opt) = &self.optimizer {
            for (i, b) in opt.momentum_buffers.iter().enumerate() {
                entries.push(Entry {
                    name: format!("momentum.{i}"),
                    shape: vec![b.len()],
                });
                blobs.push(b);
            }
        }
        let header = Header {
            architecture: self.architecture.clone(),
            defense: self.defense.clone(),
            epoch: self.epoch,
            seed: self.seed,
            optimizer: self.optimizer.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * blobs.iter().map(|b| b.len()).sum::<usize>());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for blob in blobs {
            for v in blob {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16usize.saturating_add(hlen))
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let mut cursor = &bytes[16 + hlen..];
        let mut read = |len: usize| -> Result<Vec<f32>> {
            if cursor.len() < 4 * len {
                return Err(bad("truncated tensor data"));
            }
            let (head, rest) = cursor.split_at(4 * len);
            cursor = rest;
            Ok(head
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let mut params = Vec::new();
        let mut running = Vec::new();
        let mut momentum = Vec::new();
        let mut pending_mean = None;
        for e in header.tensors {
            let data = read(e.shape.iter().product())?;
            if e.name.ends_with(".running_mean") {
                pending_mean = Some(data);
            } else if e.name.ends_with(".running_var") {
                let mean = pending_mean
                    .take()
                    .ok_or_else(|| bad("running_var without running_mean"))?;
                running.push(RunningStats { mean, var: data });
            } else if e.name.starts_with("momentum.") {
                momentum.push(data);
            } else {
                params.push((e.name, Tensor::new(e.shape, data)?));
            }
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        let optimizer = header.optimizer.map(|mut o| {
            o.momentum_buffers = momentum;
            o
        });
        Ok(Self {
            architecture: header.architecture,
            defense: header.defense,
            epoch: header.epoch,
            seed: header.seed,
            params,
            running,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::Checkpoint(format!("cannot create {}: {e}", path.display())))?;
        f.write_all(&bytes)
            .map_err(|e| Error::Checkpoint(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes =
            std::fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
