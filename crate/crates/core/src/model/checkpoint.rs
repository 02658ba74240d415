//! Checkpoint files.
//!
//! A checkpoint directory holds `manifest.json` and `weights.bin`. The
//! payload starts with the 8-byte magic `STGWCKPT` and a little-endian `u32`
//! format version, followed by every tensor as little-endian IEEE-754 `f32`
//! values, row-major, in directory order. Directory offsets are byte offsets
//! from the start of the payload file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::EncoderConfig;
use super::params::{init_encoder, EncoderWeights, HeadKind, TaskHead};
use super::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STGWCKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "weights.bin";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadEntry {
    pub name: String,
    pub kind: HeadKind,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub stage_index: usize,
    pub task: String,
    pub checkpoint_id: String,
}

/// Caller-supplied provenance recorded in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Human-readable prefix of the checkpoint id, e.g. `stage-2-qa`.
    pub label: String,
    /// Task trained in the stage that produced this checkpoint; `None` for
    /// the initial weights.
    pub task: Option<String>,
    pub stage_index: Option<usize>,
    pub parent: Option<String>,
    pub lineage: Vec<LineageEntry>,
    pub seeds: BTreeMap<String, u64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub id: String,
    pub task: Option<String>,
    pub stage_index: Option<usize>,
    pub parent: Option<String>,
    pub config: EncoderConfig,
    pub lineage: Vec<LineageEntry>,
    pub seeds: BTreeMap<String, u64>,
    pub metrics: BTreeMap<String, f64>,
    pub heads: Vec<HeadEntry>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub encoder: EncoderWeights<f32>,
    pub heads: Vec<(String, TaskHead<f32>)>,
}

impl Checkpoint {
    pub fn head(&self, name: &str) -> Option<&TaskHead<f32>> {
        self.heads.iter().find(|(n, _)| n == name).map(|(_, h)| h)
    }
}

fn head_tensor_names(name: &str) -> [String; 2] {
    [format!("heads.{name}.weight"), format!("heads.{name}.bias")]
}

/// Writes `encoder` and `heads` under `dir` and returns the manifest. The
/// checkpoint id is `label` plus a digest of the payload, so identical
/// weights always get the same id.
pub fn save_checkpoint(
    dir: &Path,
    encoder: &EncoderWeights<f32>,
    heads: &[(&str, &TaskHead<f32>)],
    meta: CheckpointMeta,
) -> Result<CheckpointManifest> {
    let mut named: Vec<(String, &Tensor<f32>)> = encoder.tensors();
    for (name, head) in heads {
        let [w, b] = head_tensor_names(name);
        named.push((w, &head.proj.weight));
        named.push((b, &head.proj.bias));
    }
    let mut payload = Vec::with_capacity(HEADER_LEN + named.iter().map(|(_, t)| t.len() * 4).sum::<usize>());
    payload.extend_from_slice(MAGIC);
    payload.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let mut tensors = Vec::with_capacity(named.len());
    for (name, t) in named {
        let offset = payload.len();
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name,
            dtype: "f32".into(),
            shape: t.shape.clone(),
            offset,
            length: payload.len() - offset,
        });
    }
    let digest = hex::encode(&Sha256::digest(&payload)[..8]);
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        id: format!("{}-{digest}", meta.label),
        task: meta.task,
        stage_index: meta.stage_index,
        parent: meta.parent,
        config: encoder.config.clone(),
        lineage: meta.lineage,
        seeds: meta.seeds,
        metrics: meta.metrics,
        heads: heads
            .iter()
            .map(|(name, h)| HeadEntry {
                name: name.to_string(),
                kind: h.kind,
                labels: h.labels.clone(),
            })
            .collect(),
        tensors,
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(PAYLOAD_FILE);
    std::fs::write(&path, &payload).map_err(|e| Error::io(path, e))?;
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(&bytes, &e))
}

fn read_tensor(payload: &[u8], dir: &BTreeMap<&str, &TensorEntry>, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
    let bad = |reason: String| Error::Checkpoint {
        tensor: name.to_string(),
        reason,
    };
    let entry = dir.get(name).ok_or_else(|| bad("missing from directory".into()))?;
    if entry.dtype != "f32" {
        return Err(bad(format!("unsupported dtype {}", entry.dtype)));
    }
    if entry.shape != shape {
        return Err(bad(format!("shape {:?}, expected {shape:?}", entry.shape)));
    }
    let n: usize = shape.iter().product();
    if entry.length != n * 4 {
        return Err(bad(format!("length {} does not match shape", entry.length)));
    }
    let end = entry.offset.checked_add(entry.length).ok_or_else(|| bad("offset overflow".into()))?;
    if entry.offset < HEADER_LEN || end > payload.len() {
        return Err(bad(format!("bytes {}..{end} outside payload of {}", entry.offset, payload.len())));
    }
    let data: Vec<f32> = payload[entry.offset..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value".into()));
    }
    Ok(data)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(PAYLOAD_FILE);
    let payload = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let header_err = |reason: &str| Error::Checkpoint {
        tensor: "<header>".into(),
        reason: reason.into(),
    };
    if payload.len() < HEADER_LEN || &payload[..8] != MAGIC {
        return Err(header_err("bad magic"));
    }
    let version = u32::from_le_bytes(payload[8..12].try_into().unwrap());
    if version != FORMAT_VERSION || manifest.format_version != FORMAT_VERSION {
        return Err(header_err("unsupported format version"));
    }
    let expected_len = HEADER_LEN + manifest.tensors.iter().map(|t| t.length).sum::<usize>();
    let directory: BTreeMap<&str, &TensorEntry> = manifest.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    if payload.len() != expected_len {
        // name the first tensor that does not fit
        let culprit = manifest
            .tensors
            .iter()
            .find(|t| t.offset + t.length > payload.len())
            .map(|t| t.name.clone())
            .unwrap_or_else(|| "<trailing bytes>".into());
        return Err(Error::Checkpoint {
            tensor: culprit,
            reason: format!("payload is {} bytes, directory describes {expected_len}", payload.len()),
        });
    }

    let mut encoder = init_encoder::<f32>(&manifest.config)?;
    for (name, t) in encoder.tensors_mut() {
        t.data = read_tensor(&payload, &directory, &name, &t.shape.clone())?;
    }
    let mut heads = Vec::with_capacity(manifest.heads.len());
    for h in &manifest.heads {
        let [wn, bn] = head_tensor_names(&h.name);
        let entry = directory.get(wn.as_str()).ok_or_else(|| Error::Checkpoint {
            tensor: wn.clone(),
            reason: "missing from directory".into(),
        })?;
        let shape = entry.shape.clone();
        if shape.len() != 2 || shape[0] != manifest.config.hidden {
            return Err(Error::Checkpoint {
                tensor: wn,
                reason: format!("head shape {shape:?} does not match hidden size"),
            });
        }
        let mut head = TaskHead::zeros(h.kind, shape[0], h.labels.clone(), shape[1]);
        if head.n_out() != shape[1] {
            return Err(Error::Checkpoint {
                tensor: wn,
                reason: format!("{} outputs for {} labels", shape[1], h.labels.len()),
            });
        }
        head.proj.weight.data = read_tensor(&payload, &directory, &wn, &shape)?;
        head.proj.bias.data = read_tensor(&payload, &directory, &bn, &[shape[1]])?;
        heads.push((h.name.clone(), head));
    }
    Ok(Checkpoint {
        manifest,
        encoder,
        heads,
    })
}
