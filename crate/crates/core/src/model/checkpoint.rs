//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `SFTKCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header with the model config
//! and every tensor's name and shape, then all tensor entries as
//! little-endian `f64` in canonical order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams};

const MAGIC: &[u8; 8] = b"SFTKCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let tensors = params.tensors();
    let header = Header {
        config: params.config.clone(),
        tensors: tensors
            .iter()
            .map(|t| TensorHeader {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let n: usize = tensors.iter().map(|t| t.data.len()).sum();
    let mut out = Vec::with_capacity(20 + header.len() + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in &tensors {
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams, ModelError> {
    let bad = |m: &str| ModelError::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body_start = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..body_start])
        .map_err(|e| ModelError::Checkpoint(format!("bad header: {e}")))?;

    let mut params = ModelParams::zeros(&header.config)?;
    let mut body = &bytes[body_start..];
    let expected: Vec<TensorHeader> = params
        .tensors()
        .iter()
        .map(|t| TensorHeader {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect();
    if expected != header.tensors {
        return Err(bad("tensor layout does not match the config"));
    }
    for t in params.tensors_mut() {
        let need = t.data.len() * 8;
        if body.len() < need {
            return Err(bad("truncated tensor data"));
        }
        for (dst, chunk) in t.data.iter_mut().zip(body[..need].chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        body = &body[need..];
    }
    if !body.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok(params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::init(&ModelConfig {
            n_layers: 2,
            d_model: 8,
            n_heads: 2,
            d_ff: 12,
            vocab_size: 9,
            max_seq_len: 6,
            init_seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let mut p = params();
        p.set_flat(3, -0.0);
        p.set_flat(4, f64::MIN_POSITIVE / 3.0);
        let q = decode_checkpoint(&encode_checkpoint(&p)).unwrap();
        assert!(p.bit_eq(&q));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &p).unwrap();
        assert!(p.bit_eq(&load_checkpoint(&path).unwrap()));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&params());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode_checkpoint(&magic).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(decode_checkpoint(&version).is_err());
    }
}
