//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `RPGK`, `u32` format version, `u64` header
//! length, a JSON header (configs, optimizer step, tensor manifest), then raw
//! `f32` data. Manifest offsets are byte offsets into the data section.
//! Tensors are stored as `param/<name>`, `adam_m/<name>` and `adam_v/<name>`
//! in canonical parameter order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OptimizerState, TrainConfig, TrainError};
use crate::autodiff::Tensor;
use crate::model::{GeneratorConfig, ParamSet, Parameters};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RPGK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub params: Parameters<f32>,
    pub optimizer: OptimizerState<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    generator: GeneratorConfig,
    train: TrainConfig,
    step: u64,
    tensors: Vec<ManifestEntry>,
}

const PREFIXES: [&str; 3] = ["param", "adam_m", "adam_v"];

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>, TrainError> {
    let groups = [&ck.params, &ck.optimizer.m, &ck.optimizer.v];
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    for (prefix, set) in PREFIXES.iter().zip(groups) {
        for (name, t) in set.names().into_iter().zip(set.values()) {
            tensors.push(ManifestEntry {
                name: format!("{prefix}/{name}"),
                shape: t.shape().to_vec(),
                offset: data.len() as u64,
            });
            for x in t.data() {
                data.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let header = Header {
        generator: ck.generator.clone(),
        train: ck.train.clone(),
        step: ck.optimizer.step,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + data.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], TrainError> {
    if bytes.len() < n {
        return Err(TrainError::Truncated);
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_tensor(data: &[u8], entries: &[ManifestEntry], name: &str, expected: &[usize]) -> Result<Tensor<f32>, TrainError> {
    let entry = entries
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| TrainError::MissingTensor(name.to_string()))?;
    if entry.shape != expected {
        return Err(TrainError::ShapeMismatch {
            name: name.to_string(),
            expected: expected.to_vec(),
            found: entry.shape.clone(),
        });
    }
    let n: usize = entry.shape.iter().product();
    let start = usize::try_from(entry.offset).map_err(|_| TrainError::Truncated)?;
    let end = start.checked_add(4 * n).ok_or(TrainError::Truncated)?;
    let raw = data.get(start..end).ok_or(TrainError::Truncated)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor::new(entry.shape.clone(), values)?)
}

/// Decodes a checkpoint, checking every tensor against the shapes implied by
/// `expected` (or by the stored generator config when `None`).
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&GeneratorConfig>) -> Result<Checkpoint, TrainError> {
    let mut rest = bytes;
    if take(&mut rest, 4)? != CHECKPOINT_MAGIC {
        return Err(TrainError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut rest, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = u64::from_le_bytes(take(&mut rest, 8)?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| TrainError::Truncated)?;
    let header: Header = serde_json::from_slice(take(&mut rest, len)?)?;
    let data = rest;

    let config = expected.unwrap_or(&header.generator);
    let layout = ParamSet::layout(config)?;
    let mut groups = Vec::with_capacity(3);
    for prefix in PREFIXES {
        let mut err = None;
        let set = layout.map(|name, spec| {
            let full = format!("{prefix}/{name}");
            match read_tensor(data, &header.tensors, &full, &spec.shape) {
                Ok(t) => t,
                Err(e) => {
                    err.get_or_insert(e);
                    Tensor::zeros(&spec.shape)
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        groups.push(set);
    }
    let expected_len: usize = header.tensors.iter().map(|e| 4 * e.shape.iter().product::<usize>()).sum();
    if data.len() < expected_len {
        return Err(TrainError::Truncated);
    }
    if data.len() > expected_len {
        return Err(TrainError::TrailingBytes(data.len() - expected_len));
    }
    let v = groups.pop().unwrap();
    let m = groups.pop().unwrap();
    let params = groups.pop().unwrap();
    Ok(Checkpoint {
        generator: header.generator,
        train: header.train,
        params,
        optimizer: OptimizerState { m, v, step: header.step },
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), TrainError> {
    std::fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    decode_checkpoint(&std::fs::read(path)?, None)
}

/// Loads a checkpoint whose tensors must match the shapes of `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &GeneratorConfig) -> Result<Checkpoint, TrainError> {
    decode_checkpoint(&std::fs::read(path)?, Some(expected))
}
