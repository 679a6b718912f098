//! Checkpoint files: `VCRC`, u32 version, u64 header length, a JSON header
//! (configs, epoch, metrics and a block table), then every tensor as
//! little-endian f32 in block-table order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::params::{ModelParams, Tensor};
use crate::scalar::Scalar;
use crate::train::EpochMetrics;

pub const MAGIC: &[u8; 4] = b"VCRC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in f32 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub epoch: usize,
    pub metrics: Option<EpochMetrics>,
    pub blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams<f32>,
}

pub fn checkpoint_bytes<S: Scalar>(
    params: &ModelParams<S>,
    train: &TrainConfig,
    epoch: usize,
    metrics: Option<&EpochMetrics>,
) -> Result<Vec<u8>> {
    let mut blocks = Vec::with_capacity(params.tensors.len());
    let mut offset = 0;
    for t in &params.tensors {
        blocks.push(BlockEntry { name: t.name.clone(), shape: t.shape.clone(), offset });
        offset += t.data.len();
    }
    let header = CheckpointHeader { model: params.config, train: train.clone(), epoch, metrics: metrics.cloned(), blocks };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &params.tensors {
        for &x in &t.data {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: String| Error::Checkpoint(m);
    if bytes.len() < 16 {
        return Err(bad(format!("{} bytes is shorter than the fixed prefix", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let json_end = 16usize.checked_add(json_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..json_end])?;
    let blob = &bytes[json_end..];

    let expected = ModelParams::<f32>::zeros(header.model)?;
    if expected.tensors.len() != header.blocks.len() {
        return Err(bad(format!("{} blocks, model needs {}", header.blocks.len(), expected.tensors.len())));
    }
    let mut tensors = Vec::with_capacity(header.blocks.len());
    let mut offset = 0;
    for (block, want) in header.blocks.iter().zip(&expected.tensors) {
        if block.name != want.name || block.shape != want.shape || block.offset != offset {
            return Err(bad(format!("block {} does not match the model layout", block.name)));
        }
        let len = want.data.len();
        let raw = blob.get(4 * offset..4 * (offset + len)).ok_or_else(|| bad(format!("truncated block {}", block.name)))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor { name: block.name.clone(), shape: block.shape.clone(), data });
        offset += len;
    }
    if blob.len() != 4 * offset {
        return Err(bad(format!("{} trailing bytes", blob.len() - 4 * offset)));
    }
    let params = ModelParams { config: header.model, tensors };
    Ok(Checkpoint { header, params })
}

pub fn write_checkpoint<S: Scalar>(
    path: &Path,
    params: &ModelParams<S>,
    train: &TrainConfig,
    epoch: usize,
    metrics: Option<&EpochMetrics>,
) -> Result<()> {
    fs::write(path, checkpoint_bytes(params, train, epoch, metrics)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&fs::read(path)?)
}
