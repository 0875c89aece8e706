//! Portable binary checkpoints.
//!
//! Layout: magic `ULMC`, little-endian `u32` version, `u32` header length,
//! UTF-8 JSON header, then every parameter as raw little-endian `f64` in
//! header order.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LmConfig, Parameters};
use crate::pipeline::Pooling;
use crate::text::Vocabulary;

pub const MAGIC: &[u8; 4] = b"ULMC";
pub const VERSION: u32 = 1;

/// Which pipeline stage produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    General,
    Imho,
    Classifier,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::General => "general",
            Self::Imho => "imho",
            Self::Classifier => "classifier",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    LanguageModel { encoder: LmConfig },
    Classifier { encoder: LmConfig, head_hidden: usize, pooling: Pooling },
}

impl Architecture {
    pub fn encoder(&self) -> &LmConfig {
        match self {
            Self::LanguageModel { encoder } | Self::Classifier { encoder, .. } => encoder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub stage: Stage,
    pub vocab_hash: String,
    pub architecture: Architecture,
    pub tensors: Vec<TensorSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint data truncated")]
    Truncated,
    #[error("unexpected bytes after the last tensor")]
    TrailingBytes,
    #[error("tensor layout mismatch: {0}")]
    Shape(String),
    #[error("vocabulary mismatch: checkpoint has {found}, expected {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("stage mismatch: checkpoint is {found}, expected {expected}")]
    StageMismatch { expected: String, found: Stage },
}

/// In-memory checkpoint: header plus flat tensor data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub data: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn capture<M: Parameters>(model: &M, stage: Stage, vocab_hash: impl Into<String>, architecture: Architecture) -> Self {
        let params = model.params();
        Self {
            header: Header {
                stage,
                vocab_hash: vocab_hash.into(),
                architecture,
                tensors: params
                    .iter()
                    .map(|p| TensorSpec {
                        name: p.name.to_string(),
                        shape: p.shape.to_vec(),
                    })
                    .collect(),
            },
            data: params.iter().map(|p| p.value.to_vec()).collect(),
        }
    }

    pub fn stage(&self) -> Stage {
        self.header.stage
    }

    /// Copies tensor data into `model`, which must have the same layout.
    pub fn restore_into<M: Parameters>(&self, model: &mut M) -> Result<(), CheckpointError> {
        let mut params = model.params_mut();
        if params.len() != self.header.tensors.len() {
            return Err(CheckpointError::Shape(format!(
                "{} tensors stored, model has {}",
                self.header.tensors.len(),
                params.len()
            )));
        }
        for ((p, spec), data) in params.iter_mut().zip(&self.header.tensors).zip(&self.data) {
            if p.name != spec.name || p.shape != spec.shape.as_slice() {
                return Err(CheckpointError::Shape(format!(
                    "stored {}{:?}, model expects {}{:?}",
                    spec.name, spec.shape, p.name, p.shape
                )));
            }
            p.value.copy_from_slice(data);
            p.grad.fill(0.0);
        }
        Ok(())
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), CheckpointError> {
        let expected = vocab.content_hash();
        if self.header.vocab_hash != expected || self.header.architecture.encoder().vocab_size != vocab.len() {
            return Err(CheckpointError::VocabMismatch {
                expected,
                found: self.header.vocab_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let header = serde_json::to_vec(&self.header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let header_len = u32::try_from(header.len()).map_err(|_| CheckpointError::Header("header too large".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&header_len.to_le_bytes())?;
        w.write_all(&header)?;
        for tensor in &self.data {
            for v in tensor {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let eof = |e: io::Error| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                CheckpointError::Truncated
            } else {
                CheckpointError::Io(e)
            }
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| match eof(e) {
            CheckpointError::Truncated => CheckpointError::BadMagic,
            other => other,
        })?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(eof)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        r.read_exact(&mut word).map_err(eof)?;
        let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut header).map_err(eof)?;
        let header: Header = serde_json::from_slice(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;

        let mut data = Vec::with_capacity(header.tensors.len());
        for spec in &header.tensors {
            let n: usize = spec.shape.iter().product();
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(eof)?;
            data.push(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect(),
            );
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(CheckpointError::TrailingBytes);
        }
        Ok(Self { header, data })
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = crate::corpus::tmp_path(path);
        self.write_to(BufWriter::new(File::create(&tmp)?))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(io::BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LanguageModel;

    fn model() -> (LanguageModel, Vocabulary) {
        let vocab = Vocabulary::build("a b c d e".split(' '), 100, 1).unwrap();
        let cfg = LmConfig {
            vocab_size: vocab.len(),
            embed_dim: 3,
            hidden_size: 4,
            num_layers: 2,
            tie_weights: false,
            dropout: 0.1,
        };
        (LanguageModel::new(cfg, 9).unwrap(), vocab)
    }

    fn capture(m: &LanguageModel, vocab: &Vocabulary) -> Checkpoint {
        Checkpoint::capture(
            m,
            Stage::General,
            vocab.content_hash(),
            Architecture::LanguageModel {
                encoder: m.config().clone(),
            },
        )
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (m, vocab) = model();
        let ck = capture(&m, &vocab);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"ULMC");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        assert_eq!(back, ck);
        let mut restored = LanguageModel::zeros(m.config().clone()).unwrap();
        back.restore_into(&mut restored).unwrap();
        for (a, b) in restored.params().iter().zip(m.params()) {
            assert!(a.value.iter().zip(b.value).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        back.check_vocab(&vocab).unwrap();
    }

    #[test]
    fn distinct_errors() {
        let (m, vocab) = model();
        let mut bytes = Vec::new();
        capture(&m, &vocab).write_to(&mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read_from(&bad[..]), Err(CheckpointError::BadMagic)));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Checkpoint::read_from(&bad[..]),
            Err(CheckpointError::UnsupportedVersion(2))
        ));

        assert!(matches!(
            Checkpoint::read_from(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated)
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::read_from(&long[..]), Err(CheckpointError::TrailingBytes)));
        assert!(matches!(Checkpoint::read_from(&b"UL"[..]), Err(CheckpointError::BadMagic)));

        let other = Vocabulary::build("a b c d e f".split(' '), 100, 1).unwrap();
        let ck = Checkpoint::read_from(&bytes[..]).unwrap();
        assert!(matches!(ck.check_vocab(&other), Err(CheckpointError::VocabMismatch { .. })));
    }

    #[test]
    fn restore_rejects_other_layout() {
        let (m, vocab) = model();
        let ck = capture(&m, &vocab);
        let mut cfg = m.config().clone();
        cfg.hidden_size = 5;
        let mut other = LanguageModel::zeros(cfg).unwrap();
        assert!(matches!(ck.restore_into(&mut other), Err(CheckpointError::Shape(_))));
    }

    #[test]
    fn save_and_load_file() {
        let (m, vocab) = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = capture(&m, &vocab);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(!crate::corpus::tmp_path(&path).exists());
    }
}
