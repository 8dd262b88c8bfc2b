//! Checkpoint format: 8-byte magic `HCRNNCK1`, a little-endian u64 byte
//! length, a UTF-8 JSON metadata document (config, precision, parameter
//! manifest with names/shapes/offsets), then the raw little-endian
//! parameter arrays in manifest order. Save → load → save is
//! byte-identical.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::{layers::ParamKind, ModelConfig, ModelGraph};

const MAGIC: &[u8; 8] = b"HCRNNCK1";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the data section.
    offset: u64,
    kind: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    format_version: u32,
    precision: String,
    config: ModelConfig,
    params: Vec<ParamEntry>,
}

pub fn save_model<T: Element>(graph: &ModelGraph<T>, path: &Path) -> Result<()> {
    let tensors = graph.named_tensors();
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, tensor, kind) in &tensors {
        entries.push(ParamEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset,
            kind: match kind {
                ParamKind::Trainable => "param".to_string(),
                ParamKind::Buffer => "buffer".to_string(),
            },
        });
        offset += (tensor.numel() * T::BYTES) as u64;
    }
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        precision: T::DTYPE.to_string(),
        config: graph.config().clone(),
        params: entries,
    };
    let meta_json = serde_json::to_vec(&meta)
        .map_err(|e| Error::Format(format!("checkpoint metadata serialization: {e}")))?;

    let mut bytes = Vec::with_capacity(16 + meta_json.len() + offset as usize);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&meta_json);
    for (_, tensor, _) in &tensors {
        for &v in tensor.data().iter() {
            v.write_le(&mut bytes);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads only the precision tag, for runtime dispatch before loading.
pub fn load_precision(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let meta = parse_meta(&bytes)?.0;
    Ok(meta.precision)
}

fn parse_meta(bytes: &[u8]) -> Result<(CheckpointMeta, usize)> {
    if bytes.len() < 16 {
        return Err(Error::Format("checkpoint truncated before header".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[..8],
            MAGIC
        )));
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let data_start = 16 + meta_len;
    if bytes.len() < data_start {
        return Err(Error::Format("checkpoint truncated inside metadata".into()));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[16..data_start])
        .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {}, expected {FORMAT_VERSION}",
            meta.format_version
        )));
    }
    Ok((meta, data_start))
}

pub fn load_model<T: Element>(path: &Path) -> Result<ModelGraph<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let (meta, data_start) = parse_meta(&bytes)?;
    if meta.precision != T::DTYPE {
        return Err(Error::Format(format!(
            "checkpoint precision {} does not match requested {}",
            meta.precision,
            T::DTYPE
        )));
    }
    // Fresh graph with the stored config; every tensor is then overwritten
    // from the data section, so the init seed is irrelevant.
    let graph = ModelGraph::<T>::init(meta.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let tensors = graph.named_tensors();
    if tensors.len() != meta.params.len() {
        return Err(Error::Format(format!(
            "parameter manifest lists {} tensors, model has {}",
            meta.params.len(),
            tensors.len()
        )));
    }
    let data = &bytes[data_start..];
    let mut expect_offset = 0u64;
    for ((name, tensor, _), entry) in tensors.iter().zip(&meta.params) {
        if &entry.name != name {
            return Err(Error::Format(format!(
                "parameter manifest order mismatch: `{}` vs expected `{}`",
                entry.name, name
            )));
        }
        if entry.shape != tensor.shape() {
            return Err(Error::Format(format!(
                "parameter `{}` has shape {:?}, expected {:?}",
                entry.name,
                entry.shape,
                tensor.shape()
            )));
        }
        if entry.offset != expect_offset {
            return Err(Error::Format(format!(
                "parameter `{}` offset {} does not match running total {}",
                entry.name, entry.offset, expect_offset
            )));
        }
        let nbytes = tensor.numel() * T::BYTES;
        let start = entry.offset as usize;
        if data.len() < start + nbytes {
            return Err(Error::Format(format!(
                "checkpoint truncated inside parameter `{}`",
                entry.name
            )));
        }
        {
            let mut dst = tensor.data_mut();
            for (i, slot) in dst.iter_mut().enumerate() {
                *slot = T::read_le(&data[start + i * T::BYTES..]);
            }
        }
        expect_offset += nbytes as u64;
    }
    if data.len() != expect_offset as usize {
        return Err(Error::Format(format!(
            "checkpoint data section has {} bytes, manifest accounts for {}",
            data.len(),
            expect_offset
        )));
    }
    Ok(graph)
}
