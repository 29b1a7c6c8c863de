//! Binary checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "SYMSEQCK"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header (see `Header`)
//! 20+H    ...   parameter values, f32 little-endian, tensors in header order
//!               then, if the header has an optimizer entry, every first
//!               moment tensor followed by every second moment tensor
//! ```
//!
//! The header lists the model config, the vocabulary hash, the optimizer step,
//! each tensor's name and shape, and free-form metadata. Nothing time-dependent
//! is written, so identical training runs produce identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::model::{ModelConfig, Transformer};
use crate::optim::{AdamState, AdamW};
use crate::params::Parameters;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SYMSEQCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerEntry {
    adamw: AdamW,
    t: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_hash: String,
    step: u64,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub step: u64,
    pub params: Parameters<f32>,
    pub optimizer: Option<(AdamW, AdamState<f32>)>,
    pub meta: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn model(&self) -> Result<Transformer<f32>, NnError> {
        Transformer::from_parameters(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            step: self.step,
            tensors: self
                .params
                .names()
                .iter()
                .zip(self.params.tensors())
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            optimizer: self
                .optimizer
                .as_ref()
                .map(|(adamw, s)| OptimizerEntry { adamw: *adamw, t: s.t }),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 4 * self.params.count() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |ts: &[Tensor<f32>]| {
            for t in ts {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        };
        put(self.params.tensors());
        if let Some((_, s)) = &self.optimizer {
            put(&s.m);
            put(&s.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes
            .get(20..20usize.saturating_add(hlen))
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
        let mut data = &bytes[20 + hlen..];
        let mut take = |shape: &[usize]| -> Result<Tensor<f32>, NnError> {
            let n: usize = shape.iter().product();
            if data.len() < 4 * n {
                return Err(bad("truncated tensor data"));
            }
            let (head, rest) = data.split_at(4 * n);
            data = rest;
            let values = head
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Tensor::new(shape.to_vec(), values))
        };
        let mut params = Parameters::new();
        for e in &header.tensors {
            params.push(e.name.clone(), take(&e.shape)?);
        }
        let optimizer = match header.optimizer {
            Some(o) => {
                let m = header
                    .tensors
                    .iter()
                    .map(|e| take(&e.shape))
                    .collect::<Result<_, _>>()?;
                let v = header
                    .tensors
                    .iter()
                    .map(|e| take(&e.shape))
                    .collect::<Result<_, _>>()?;
                Some((o.adamw, AdamState { t: o.t, m, v }))
            }
            None => None,
        };
        if !data.is_empty() {
            return Err(bad(format!("{} trailing bytes", data.len())));
        }
        Ok(Checkpoint {
            config: header.config,
            vocab_hash: header.vocab_hash,
            step: header.step,
            params,
            optimizer,
            meta: header.meta,
        })
    }

    /// Writes through a temporary file in the same directory and renames it
    /// into place.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Fails unless the checkpoint was trained with vocabulary `hash`.
    pub fn check_vocab(&self, hash: &str) -> Result<(), NnError> {
        if self.vocab_hash != hash {
            return Err(NnError::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found: hash.to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(with_opt: bool) -> Checkpoint {
        let cfg = ModelConfig {
            vocab_size: 9,
            d_model: 8,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ffn: 16,
            dropout: 0.1,
            max_len: 10,
            pad_id: 0,
        };
        let m = Transformer::<f32>::init(cfg.clone(), 9).unwrap();
        let params = m.into_params();
        let optimizer = with_opt.then(|| {
            let mut s = AdamState::new(&params);
            s.t = 7;
            s.m[0].data_mut()[3] = 0.25;
            s.v[1].data_mut()[0] = 1.5;
            (AdamW::default(), s)
        });
        Checkpoint {
            config: cfg,
            vocab_hash: "abc123".into(),
            step: 42,
            params,
            optimizer,
            meta: serde_json::json!({"task": "prod-f7"}),
        }
    }

    #[test]
    fn round_trip_with_and_without_optimizer() {
        for opt in [false, true] {
            let ck = sample(opt);
            let bytes = ck.to_bytes();
            assert_eq!(&bytes[..8], MAGIC);
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
            back.model().unwrap();
        }
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = sample(true).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 2;
        assert!(Checkpoint::from_bytes(&wrong).is_err());
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn vocabulary_check() {
        let ck = sample(false);
        assert!(ck.check_vocab("abc123").is_ok());
        assert!(matches!(ck.check_vocab("zzz"), Err(NnError::VocabMismatch { .. })));
    }
}
