//! Checkpoint layout: the 7 magic bytes `CTXSUM1`, a little-endian `u32`
//! manifest length, the JSON manifest, then every tensor as little-endian
//! `f32`s at the byte offset the manifest gives (relative to the blob start).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::substrate::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"CTXSUM1";

/// Where the stored parameters came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    /// 1-based epoch the parameters were taken from (0 = untrained)
    pub epoch: usize,
    pub val_acc: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    vocab_hash: String,
    meta: TrainingMeta,
    params: Vec<Entry>,
}

impl ModelCheckpoint {
    pub fn new(model: Model, meta: TrainingMeta) -> Self {
        Self { model, meta }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut params = Vec::new();
        let mut blob = Vec::with_capacity(self.model.num_params() * 4);
        for (name, t) in self.model.params().values() {
            params.push(Entry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset: blob.len(),
            });
            for x in t.data() {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = serde_json::to_vec(&Manifest {
            config: self.model.config().clone(),
            vocab_hash: self.model.config().vocab_fingerprint.clone(),
            meta: self.meta.clone(),
            params,
        })?;
        let len = u32::try_from(manifest.len()).map_err(|_| Error::Checkpoint("manifest too large".into()))?;
        let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 4 + manifest.len() + blob.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let rest = bytes.strip_prefix(CHECKPOINT_MAGIC.as_slice()).ok_or_else(|| bad("missing CTXSUM1 magic"))?;
        let (len, rest) = rest.split_first_chunk::<4>().ok_or_else(|| bad("truncated header"))?;
        let len = u32::from_le_bytes(*len) as usize;
        if rest.len() < len {
            return Err(bad("truncated manifest"));
        }
        let (manifest, blob) = rest.split_at(len);
        let manifest: Manifest = serde_json::from_slice(manifest)?;
        if manifest.vocab_hash != manifest.config.vocab_fingerprint {
            return Err(bad("manifest vocab hash disagrees with its config"));
        }
        let mut store = ParamStore::new();
        let mut expected_end = 0;
        for entry in manifest.params {
            let n: usize = entry.shape.iter().product();
            if entry.offset != expected_end {
                return Err(Error::Checkpoint(format!("{}: unexpected offset {}", entry.name, entry.offset)));
            }
            let end = entry.offset + n * 4;
            let raw = blob
                .get(entry.offset..end)
                .ok_or_else(|| Error::Checkpoint(format!("{}: data runs past end of file", entry.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunks of four")))
                .collect();
            store.insert(entry.name, Tensor::new(entry.shape, data)?)?;
            expected_end = end;
        }
        if expected_end != blob.len() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        Ok(Self {
            model: Model::from_parts(manifest.config, store)?,
            meta: manifest.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
