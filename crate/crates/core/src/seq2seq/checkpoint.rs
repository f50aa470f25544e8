//! Versioned binary checkpoints.
//!
//! Layout: the magic line `d2t-checkpoint\n`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, then the
//! parameter tensors in declaration order as little-endian `f32`, then the
//! Adam moments in the same order when the header says they are present.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TransformerConfig;
use super::model::Transformer;
use super::optim::{OptimizerState, Schedule};
use super::params::ParamLayout;
use super::Seq2SeqError;

const MAGIC: &[u8] = b"d2t-checkpoint\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerHeader {
    step: u64,
    schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: TransformerConfig,
    subword_fingerprint: String,
    task: String,
    tensors: Vec<TensorHeader>,
    optimizer: Option<OptimizerHeader>,
}

/// Model, optimizer state and provenance.
#[derive(Clone, Debug)]
pub struct TransformerCheckpoint {
    pub model: Transformer<f32>,
    pub optimizer: Option<OptimizerState<f32>>,
    pub subword_fingerprint: String,
    /// What produced the parameters, e.g. `init`, `nmt`, `finetune`.
    pub task: String,
}

impl TransformerCheckpoint {
    pub fn new(model: Transformer<f32>, subword_fingerprint: &str, task: &str) -> Self {
        TransformerCheckpoint {
            model,
            optimizer: None,
            subword_fingerprint: subword_fingerprint.to_string(),
            task: task.to_string(),
        }
    }

    pub fn config(&self) -> &TransformerConfig {
        self.model.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.model.config().clone(),
            subword_fingerprint: self.subword_fingerprint.clone(),
            task: self.task.clone(),
            tensors: self
                .model
                .layout()
                .specs()
                .iter()
                .map(|s| TensorHeader {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                step: o.step,
                schedule: o.schedule.clone(),
            }),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let n = self.model.num_params();
        let mut out = Vec::with_capacity(MAGIC.len() + 12 + json.len() + 12 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |xs: &[f32]| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(self.model.params());
        if let Some(o) = &self.optimizer {
            put(&o.m);
            put(&o.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Seq2SeqError> {
        let mut r = bytes;
        let fmt = |m: &str| Seq2SeqError::Format(m.to_string());
        let mut magic = vec![0u8; MAGIC.len()];
        r.read_exact(&mut magic).map_err(|_| fmt("truncated magic"))?;
        if magic != MAGIC {
            return Err(fmt("not a checkpoint file"));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b).map_err(|_| fmt("truncated version"))?;
        let version = u32::from_le_bytes(u32b);
        if version != CHECKPOINT_VERSION {
            return Err(Seq2SeqError::Format(format!("unsupported version {version}")));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b).map_err(|_| fmt("truncated header length"))?;
        let hlen = u64::from_le_bytes(u64b) as usize;
        if hlen > r.len() {
            return Err(fmt("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&r[..hlen]).map_err(|e| Seq2SeqError::Format(format!("header: {e}")))?;
        r = &r[hlen..];

        header.config.validate()?;
        let layout_total = ParamLayout::new(&header.config).total();
        let declared: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if declared != layout_total {
            return Err(fmt("tensor table does not match the configuration"));
        }
        let blocks = if header.optimizer.is_some() { 3 } else { 1 };
        if r.len() != blocks * layout_total * 4 {
            return Err(Seq2SeqError::Format(format!(
                "expected {} payload bytes, found {}",
                blocks * layout_total * 4,
                r.len()
            )));
        }
        let mut floats = r.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let params: Vec<f32> = floats.by_ref().take(layout_total).collect();
        let model = Transformer::from_params(header.config, params)?;
        let names_match = model
            .layout()
            .specs()
            .iter()
            .zip(&header.tensors)
            .all(|(s, t)| s.name == t.name && s.shape == t.shape);
        if !names_match {
            return Err(fmt("tensor names or shapes differ from the configuration"));
        }
        let optimizer = header.optimizer.map(|o| {
            let m: Vec<f32> = floats.by_ref().take(layout_total).collect();
            let v: Vec<f32> = floats.by_ref().take(layout_total).collect();
            OptimizerState {
                step: o.step,
                m,
                v,
                schedule: o.schedule,
            }
        });
        Ok(TransformerCheckpoint {
            model,
            optimizer,
            subword_fingerprint: header.subword_fingerprint,
            task: header.task,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Seq2SeqError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Seq2SeqError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Load and require the given configuration and subword model.
    pub fn load_matching(
        path: impl AsRef<Path>,
        config: &TransformerConfig,
        subword_fingerprint: &str,
    ) -> Result<Self, Seq2SeqError> {
        let ck = Self::load(path)?;
        ck.check_compatible(config, subword_fingerprint)?;
        Ok(ck)
    }

    pub fn check_compatible(&self, config: &TransformerConfig, subword_fingerprint: &str) -> Result<(), Seq2SeqError> {
        if self.model.config() != config {
            return Err(Seq2SeqError::Mismatch("model configuration differs".into()));
        }
        if self.subword_fingerprint != subword_fingerprint {
            return Err(Seq2SeqError::Mismatch(format!(
                "subword model {} expected, checkpoint has {}",
                subword_fingerprint, self.subword_fingerprint
            )));
        }
        Ok(())
    }
}
