//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"DANCKPT\0"  u32 version  u64 manifest_len  manifest (JSON, UTF-8)
//! u32 param_count
//! per parameter: u32 name_len  name  u32 ndim  u64 dims[ndim]  f64 values[product(dims)]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::labels::LabelSpace;
use super::network::{build_model, Model};
use crate::corpus::Vocab;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DANCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub labels: Vec<String>,
    pub vocab_hash: String,
    pub vocab: Vec<String>,
    #[serde(default = "yes")]
    pub embedding_trainable: bool,
    /// Free-form training provenance (epoch, validation score, split seed).
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: Model,
    pub vocab: Vocab,
}

impl Checkpoint {
    pub fn new(model: Model, vocab: Vocab, meta: serde_json::Value) -> Self {
        let manifest = CheckpointManifest {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            labels: model.label_space().names().map(String::from).collect(),
            vocab_hash: vocab.hash(),
            vocab: vocab.tokens().to_vec(),
            embedding_trainable: model
                .params
                .get("embedding.weight")
                .is_none_or(|t| t.requires_grad()),
            meta,
        };
        Checkpoint { manifest, model, vocab }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let manifest = serde_json::to_vec(&ckpt.manifest)?;
    let mut out = Vec::with_capacity(manifest.len() + 8 * ckpt.model.params.numel() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&(ckpt.model.params.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.model.params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file: wanted {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} does not fit in memory")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let mlen = r.len("manifest length")?;
    let manifest: CheckpointManifest = serde_json::from_slice(r.take(mlen)?)?;
    let vocab = Vocab::from_tokens(manifest.vocab.clone())?;
    if vocab.hash() != manifest.vocab_hash {
        return Err(Error::Checkpoint("vocabulary does not match its recorded hash".into()));
    }
    let space = LabelSpace::for_task(manifest.config.task);
    if !space.names().eq(manifest.labels.iter().map(String::as_str)) {
        return Err(Error::Checkpoint(format!(
            "label space {:?} does not match task {}",
            manifest.labels, manifest.config.task
        )));
    }

    // A freshly built model fixes the expected names and shapes.
    let mut model = build_model(&manifest.config, vocab.len())?;
    let count = r.u32()? as usize;
    if count != model.params.len() {
        return Err(Error::Checkpoint(format!(
            "file holds {count} parameters, the configured model has {}",
            model.params.len()
        )));
    }
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.len("dimension")?);
        }
        let target = model
            .params
            .get_mut(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{name}`")))?;
        if target.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` has shape {shape:?}, expected {:?}",
                target.shape()
            )));
        }
        let raw = r.take(8 * target.numel())?;
        for (dst, chunk) in target.values_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if let Some(t) = model.params.get_mut("embedding.weight") {
        t.set_requires_grad(manifest.embedding_trainable);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last parameter",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { manifest, model, vocab })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
