//! Checkpoint container: `MPLRCKPT`, a little-endian `u32` version, a `u64`
//! header length, a JSON header (shapes, seed, options, hyperparameters,
//! predicate names, tensor list) and then every tensor as raw little-endian
//! `f64`, in header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ModelParams, ModelShape, ScoreOptions, Tensor};

const MAGIC: &[u8; 8] = b"MPLRCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub options: ScoreOptions,
    pub hyperparameters: BTreeMap<String, String>,
    /// Predicate vocabulary the model was trained against.
    pub predicates: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    shape: ModelShape,
    seed: u64,
    options: ScoreOptions,
    hyperparameters: BTreeMap<String, String>,
    predicates: Vec<String>,
    tensors: Vec<TensorHeader>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            shape: self.params.shape(),
            seed: self.seed,
            options: self.options,
            hyperparameters: self.hyperparameters.clone(),
            predicates: self.predicates.clone(),
            tensors: self
                .params
                .tensors()
                .iter()
                .map(|t| TensorHeader {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut cursor = &bytes[20 + hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let len: usize = th.shape.iter().product();
            if cursor.len() < 8 * len {
                return Err(Error::Checkpoint(format!("truncated data in `{}`", th.name)));
            }
            let (chunk, rest) = cursor.split_at(8 * len);
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            cursor = rest;
            tensors.push(Tensor {
                name: th.name,
                shape: th.shape,
                data,
            });
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            params: ModelParams::from_parts(header.shape, tensors)?,
            seed: header.seed,
            options: header.options,
            hyperparameters: header.hyperparameters,
            predicates: header.predicates,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
