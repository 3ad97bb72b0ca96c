//! Binary checkpoint container.
//!
//! Layout (little-endian): `RWRN`, u32 version, u32 config length, config
//! text (`key=value` lines), u32 tensor count, then per tensor: u32 name
//! length, name, u8 dtype tag, u32 rank, u64 per dim, raw payload.

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::model::{ModelConfig, ModelParams, NamedTensor};
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"RWRN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (this build reads {VERSION})")]
    Version(u32),
    #[error("truncated checkpoint: incomplete {record} (need {needed} bytes, {available} left)")]
    Truncated {
        record: String,
        needed: usize,
        available: usize,
    },
    #[error("checkpoint {record}: {message}")]
    Malformed { record: String, message: String },
    #[error("checkpoint config: {0}")]
    Config(#[from] ConfigError),
}

fn is_buffer(name: &str) -> bool {
    name.ends_with("running_mean") || name.ends_with("running_var")
}

pub fn encode_checkpoint<T: Scalar>(params: &ModelParams<T>) -> Vec<u8> {
    let config = params.config.to_kv().to_text();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(T::DTYPE.tag());
        out.extend_from_slice(&(t.value.rank() as u32).to_le_bytes());
        for &d in t.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.value.data() {
            match T::DTYPE {
                DType::F32 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, record: &str) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                record: record.to_string(),
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, record: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, record)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, record: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, record)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self, n: usize, record: &str) -> Result<String, CheckpointError> {
        String::from_utf8(self.take(n, record)?.to_vec()).map_err(|_| CheckpointError::Malformed {
            record: record.to_string(),
            message: "not valid UTF-8".into(),
        })
    }
}

/// Decodes a checkpoint. Payloads stored in another precision are
/// converted to `T`.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "header")? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let config_len = r.u32("config block")? as usize;
    let config_text = r.text(config_len, "config block")?;
    let config = ModelConfig::from_kv(&KeyValues::parse(&config_text)?)?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let rec = format!("tensor record {i}");
        let name_len = r.u32(&rec)? as usize;
        let name = r.text(name_len, &rec)?;
        let rec = format!("tensor {name}");
        let tag = r.take(1, &rec)?[0];
        let dtype = DType::from_tag(tag).ok_or_else(|| CheckpointError::Malformed {
            record: rec.clone(),
            message: format!("unknown dtype tag {tag}"),
        })?;
        let rank = r.u32(&rec)? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64(&rec)? as usize);
        }
        let n: usize = shape.iter().product();
        let width = match dtype {
            DType::F32 => 4,
            DType::F64 => 8,
        };
        let payload = r.take(n.saturating_mul(width), &rec)?;
        let data: Vec<T> = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| T::from_f64_lossy(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect(),
        };
        let value = Tensor::from_vec(&shape, data).expect("payload sized from shape");
        tensors.push(NamedTensor {
            trainable: !is_buffer(&name),
            name,
            value,
        });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed {
            record: "trailer".into(),
            message: format!("{} unexpected bytes after the last tensor", bytes.len() - r.pos),
        });
    }
    Ok(ModelParams { config, tensors })
}

/// Writes `bytes` to a temporary file next to `path`, then renames it
/// into place so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<(), CheckpointError> {
    atomic_write(path, &encode_checkpoint(params)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
