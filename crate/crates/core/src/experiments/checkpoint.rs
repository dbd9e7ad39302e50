//! Binary checkpoints for the three model types.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "BCMC" | version u32 | config_len u64 | config JSON (UTF-8)
//! tensor_count u32
//! per tensor: name_len u32 | name UTF-8 | rank u32 | dims u64 × rank | data f64 × numel
//! ```
//!
//! The config blob records the model kind, its configuration and the
//! vocabulary, so a checkpoint is self-contained.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::matcher::{MatcherConfig, MatcherModel};
use crate::summarizer::{SummarizerConfig, SummarizerModel};
use crate::tensor::Tensor;
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 4] = b"BCMC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint is malformed: {0}")]
    Malformed(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongKind { found: String, expected: &'static str },
    #[error("unknown tensor {0:?} in checkpoint")]
    UnknownTensor(String),
    #[error("tensor {0:?} missing from checkpoint")]
    MissingTensor(String),
    #[error("shape mismatch for tensor {name:?}: checkpoint has {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("cannot rebuild model from checkpoint: {0}")]
    Rebuild(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// Decoded checkpoint contents before they are bound to a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub config: Value,
    pub tensors: Vec<NamedArray>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode(config: &Value, tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let blob = serde_json::to_vec(config).expect("JSON value serializes");
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(&blob);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, wide: bool) -> Result<usize> {
        let n = if wide { self.u64()? } else { u64::from(self.u32()?) };
        usize::try_from(n).map_err(|_| CheckpointError::Truncated)
    }
}

pub fn decode(bytes: &[u8]) -> Result<RawCheckpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut cur = Cursor { bytes: &bytes[4..] };
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let blob_len = cur.len(true)?;
    let config = serde_json::from_slice(cur.take(blob_len)?)
        .map_err(|e| CheckpointError::Malformed(format!("config blob: {e}")))?;
    let count = cur.len(false)?;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = cur.len(false)?;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.len(false)?;
        let shape = (0..rank).map(|_| cur.len(true)).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(CheckpointError::Truncated)?;
        let raw = cur.take(numel.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(NamedArray { name, shape, data });
    }
    if !cur.bytes.is_empty() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", cur.bytes.len())));
    }
    Ok(RawCheckpoint { config, tensors })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

pub fn read_raw(path: &Path) -> Result<RawCheckpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
    decode(&bytes)
}

/// Copies checkpoint arrays into `targets`, matching by name. Every target
/// must be present and every stored array must have a target.
pub fn assign(raw: &RawCheckpoint, targets: &[(String, Tensor)]) -> Result<()> {
    for arr in &raw.tensors {
        let (_, t) = targets
            .iter()
            .find(|(n, _)| *n == arr.name)
            .ok_or_else(|| CheckpointError::UnknownTensor(arr.name.clone()))?;
        if t.shape() != arr.shape.as_slice() {
            return Err(CheckpointError::ShapeMismatch {
                name: arr.name.clone(),
                found: arr.shape.clone(),
                expected: t.shape().to_vec(),
            });
        }
    }
    for (name, t) in targets {
        let arr = raw
            .tensors
            .iter()
            .find(|a| a.name == *name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
        t.set_data(&arr.data).expect("shape checked above");
    }
    Ok(())
}

/// A model that can be written to and restored from a checkpoint.
pub trait Checkpointable: Sized {
    const KIND: &'static str;

    /// Everything needed to rebuild an empty model of the same shape.
    fn checkpoint_config(&self) -> Value;

    fn checkpoint_tensors(&self) -> Vec<(String, Tensor)>;

    /// A freshly initialized model matching `config`, ready for [`assign`].
    fn from_checkpoint_config(config: &Value) -> Result<Self>;
}

#[derive(Serialize, Deserialize)]
struct Envelope<C> {
    kind: String,
    config: C,
    vocab: Vocabulary,
}

fn envelope<C: Serialize>(kind: &str, config: C, vocab: &Vocabulary) -> Value {
    serde_json::to_value(Envelope {
        kind: kind.to_string(),
        config,
        vocab: vocab.clone(),
    })
    .expect("config serializes")
}

fn open_envelope<C: for<'de> Deserialize<'de>>(value: &Value, expected: &'static str) -> Result<(C, Arc<Vocabulary>)> {
    let kind = value.get("kind").and_then(Value::as_str).unwrap_or("unknown");
    if kind != expected {
        return Err(CheckpointError::WrongKind {
            found: kind.to_string(),
            expected,
        });
    }
    let env: Envelope<C> =
        serde_json::from_value(value.clone()).map_err(|e| CheckpointError::Malformed(format!("config blob: {e}")))?;
    Ok((env.config, Arc::new(env.vocab)))
}

#[derive(Serialize, Deserialize)]
struct EmbeddingShape {
    dim: usize,
}

impl Checkpointable for EmbeddingTable {
    const KIND: &'static str = "embeddings";

    fn checkpoint_config(&self) -> Value {
        envelope(Self::KIND, EmbeddingShape { dim: self.dim() }, self.vocab())
    }

    fn checkpoint_tensors(&self) -> Vec<(String, Tensor)> {
        vec![("emb.vectors".into(), self.vectors().clone())]
    }

    fn from_checkpoint_config(config: &Value) -> Result<Self> {
        let (shape, vocab): (EmbeddingShape, _) = open_envelope(config, Self::KIND)?;
        let n = vocab.len() * shape.dim;
        EmbeddingTable::from_vectors(vocab, shape.dim, vec![0.0; n]).map_err(|e| CheckpointError::Rebuild(e.to_string()))
    }
}

impl Checkpointable for SummarizerModel {
    const KIND: &'static str = "summarizer";

    fn checkpoint_config(&self) -> Value {
        envelope(Self::KIND, self.config(), self.vocab())
    }

    fn checkpoint_tensors(&self) -> Vec<(String, Tensor)> {
        self.named_parameters()
    }

    fn from_checkpoint_config(config: &Value) -> Result<Self> {
        let (cfg, vocab): (SummarizerConfig, _) = open_envelope(config, Self::KIND)?;
        SummarizerModel::new(cfg, vocab, 0).map_err(|e| CheckpointError::Rebuild(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct MatcherBlob {
    #[serde(flatten)]
    matcher: MatcherConfig,
    embedding_dim: usize,
}

impl Checkpointable for MatcherModel {
    const KIND: &'static str = "matcher";

    fn checkpoint_config(&self) -> Value {
        let blob = MatcherBlob {
            matcher: self.config().clone(),
            embedding_dim: self.embeddings().dim(),
        };
        envelope(Self::KIND, blob, self.embeddings().vocab())
    }

    fn checkpoint_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("emb.vectors".to_string(), self.embeddings().vectors().clone())];
        out.extend(self.named_parameters());
        out
    }

    fn from_checkpoint_config(config: &Value) -> Result<Self> {
        let (blob, vocab): (MatcherBlob, _) = open_envelope(config, Self::KIND)?;
        let n = vocab.len() * blob.embedding_dim;
        let table = EmbeddingTable::from_vectors(vocab, blob.embedding_dim, vec![0.0; n])
            .map_err(|e| CheckpointError::Rebuild(e.to_string()))?;
        MatcherModel::new(blob.matcher, table, 0).map_err(|e| CheckpointError::Rebuild(e.to_string()))
    }
}

pub fn save_checkpoint<M: Checkpointable>(model: &M, path: &Path) -> Result<()> {
    write_file(path, &encode(&model.checkpoint_config(), &model.checkpoint_tensors()))
}

/// Rebuilds a model from its checkpoint.
pub fn load_checkpoint<M: Checkpointable>(path: &Path) -> Result<M> {
    let raw = read_raw(path)?;
    let model = M::from_checkpoint_config(&raw.config)?;
    assign(&raw, &model.checkpoint_tensors())?;
    Ok(model)
}

/// Loads tensors into an existing model, which fixes the expected shapes.
pub fn load_checkpoint_into<M: Checkpointable>(model: &M, path: &Path) -> Result<()> {
    let raw = read_raw(path)?;
    let kind = raw.config.get("kind").and_then(Value::as_str).unwrap_or("unknown");
    if kind != M::KIND {
        return Err(CheckpointError::WrongKind {
            found: kind.to_string(),
            expected: M::KIND,
        });
    }
    assign(&raw, &model.checkpoint_tensors())
}
