//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//! `"MARIA1"`, `u32` version, 32-byte SHA-256 of the config JSON,
//! `u64` config length, config JSON, `u64` record count, then per record
//! `u32` name length, name, `u64` rows, `u64` cols, `rows*cols` `f64` values.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::Model;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"MARIA1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let config = serde_json::to_vec(&model.config)?;
    let mut out = Vec::with_capacity(64 + config.len() + model.store.scalar_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&config));
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(model.store.len() as u64).to_le_bytes());
    for (_, p) in model.store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape[0] as u64).to_le_bytes());
        out.extend_from_slice(&(p.shape[1] as u64).to_le_bytes());
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

fn header(bytes: &[u8]) -> Result<(ModelConfig, Cursor<'_>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(6)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let digest = c.take(32)?.to_vec();
    let n = c.len()?;
    let config_bytes = c.take(n)?;
    if Sha256::digest(config_bytes).as_slice() != digest.as_slice() {
        return Err(Error::Checkpoint("config digest does not match embedded config".into()));
    }
    let config: ModelConfig = serde_json::from_slice(config_bytes)?;
    Ok((config, c))
}

/// Config stored in a checkpoint.
pub fn read_checkpoint_config(path: &Path) -> Result<ModelConfig> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(header(&bytes)?.0)
}

/// Rebuilds the model stored at `path`. With `expected`, the stored config
/// digest must match it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (config, mut c) = header(&bytes)?;
    if let Some(exp) = expected {
        if exp.digest() != config.digest() {
            return Err(Error::Checkpoint(format!(
                "config digest mismatch: checkpoint {}, expected {}",
                config.digest(),
                exp.digest()
            )));
        }
    }
    let mut model = Model::new(config)?;
    let records = c.len()?;
    if records != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "{records} records, model has {} parameters",
            model.store.len()
        )));
    }
    for _ in 0..records {
        let n = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(n)?)
            .map_err(|_| Error::Checkpoint("non-UTF-8 parameter name".into()))?
            .to_string();
        let shape = [c.len()?, c.len()?];
        let p = model
            .store
            .by_name_mut(&name)
            .map_err(|_| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        if p.shape != shape {
            return Err(Error::Checkpoint(format!(
                "`{name}`: shape {shape:?}, model expects {:?}",
                p.shape
            )));
        }
        let raw = c.take(shape[0] * shape[1] * 8)?;
        for (v, chunk) in p.data.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}
