//! Binary model container.
//!
//! ```text
//! "WHTS"  u32 version  [32] config digest
//! u64 metadata length, metadata (TOML)
//! u32 entry count, entries: u32 name length, name, u32 rank, u64 dims…, f64 values…
//! [32] SHA-256 of everything above
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::neural::{Activation, DenseLayer, Mlp, Tensor2};
use crate::nhits::{BlockConfig, ModelShape, NhitsModel};

use super::config::ExperimentConfig;
use super::train::{EpochRecord, Provenance, TrainedArtifact};

pub const MAGIC: [u8; 4] = *b"WHTS";
pub const FORMAT_VERSION: u32 = 1;

/// A named, row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    provenance: Provenance,
    best_epoch: usize,
    model: Option<ModelMeta>,
    config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    input_channels: usize,
    raw_channels: usize,
    n_targets: usize,
    input_length: usize,
    horizon: usize,
    blocks: Vec<BlockMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockMeta {
    config: BlockConfig,
    activations: Vec<Activation>,
}

fn vector(name: String, values: Vec<f64>) -> Entry {
    Entry {
        name,
        dims: vec![values.len() as u64],
        values,
    }
}

fn entries_of(a: &TrainedArtifact) -> Vec<Entry> {
    let mut out = vec![
        vector("scaler.mean".into(), a.scaler.mean.clone()),
        vector("scaler.std".into(), a.scaler.std.clone()),
        vector(
            "scaler.passthrough".into(),
            a.scaler.passthrough.iter().map(|p| f64::from(u8::from(*p))).collect(),
        ),
        vector("history.epoch".into(), a.history.iter().map(|r| r.epoch as f64).collect()),
        vector("history.train_loss".into(), a.history.iter().map(|r| r.train_loss).collect()),
        vector("history.val_loss".into(), a.history.iter().map(|r| r.val_loss).collect()),
    ];
    if let Some(m) = &a.model {
        for (b, block) in m.blocks.iter().enumerate() {
            for (l, layer) in block.network.layers.iter().enumerate() {
                out.push(Entry {
                    name: format!("block{b}.layer{l}.weight"),
                    dims: vec![layer.weights.rows() as u64, layer.weights.cols() as u64],
                    values: layer.weights.as_slice().to_vec(),
                });
                out.push(vector(format!("block{b}.layer{l}.bias"), layer.bias.clone()));
            }
        }
    }
    out
}

pub fn encode(a: &TrainedArtifact) -> Vec<u8> {
    let meta = Meta {
        provenance: a.provenance.clone(),
        best_epoch: a.best_epoch,
        model: a.model.as_ref().map(|m| ModelMeta {
            input_channels: m.shape.input_channels,
            raw_channels: m.shape.raw_channels,
            n_targets: m.shape.n_targets,
            input_length: m.shape.input_length,
            horizon: m.shape.horizon,
            blocks: m
                .blocks
                .iter()
                .map(|b| BlockMeta {
                    config: b.config.clone(),
                    activations: b.network.layers.iter().map(|l| l.activation).collect(),
                })
                .collect(),
        }),
        config: a.config.clone(),
    };
    let meta = toml::to_string(&meta).expect("metadata is representable as TOML");
    let entries = entries_of(a);

    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&a.config.digest());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(meta.as_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in &entries {
        buf.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.name.as_bytes());
        buf.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
        for d in &e.dims {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in &e.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = Sha256::digest(&buf);
    buf.extend_from_slice(&sum);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(Error::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &'static str) -> Result<usize> {
        let n = self.u64(what)?;
        usize::try_from(n).map_err(|_| Error::Truncated(what))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrainedArtifact> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Version("not a model container (bad magic bytes)".into()));
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let digest: [u8; 32] = r.take(32, "config digest")?.try_into().expect("32 bytes");
    let meta_len = r.len("metadata length")?;
    let meta_bytes = r.take(meta_len, "metadata")?;
    let count = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32("entry name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "entry name")?.to_vec())
            .map_err(|_| Error::Version("entry name is not UTF-8".into()))?;
        let rank = r.u32("entry rank")? as usize;
        let dims = (0..rank).map(|_| r.u64("entry dims")).collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(usize::try_from(*d).ok()?))
            .and_then(|n| n.checked_mul(8))
            .ok_or(Error::Truncated("entry size"))?;
        let values = r
            .take(n, "entry values")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        entries.push(Entry { name, dims, values });
    }
    let body_end = r.pos;
    let stored = r.take(32, "checksum")?;
    if r.pos != bytes.len() || Sha256::digest(&bytes[..body_end]).as_slice() != stored {
        return Err(Error::Checksum);
    }

    let meta_text = std::str::from_utf8(meta_bytes).map_err(|_| Error::Version("metadata is not UTF-8".into()))?;
    let meta: Meta = toml::from_str(meta_text).map_err(|e| Error::Version(format!("metadata: {e}")))?;
    if meta.config.digest() != digest {
        return Err(Error::Version("config digest does not match the stored config".into()));
    }
    assemble(meta, entries)
}

fn assemble(meta: Meta, entries: Vec<Entry>) -> Result<TrainedArtifact> {
    let mut by_name: std::collections::BTreeMap<String, Entry> = entries.into_iter().map(|e| (e.name.clone(), e)).collect();
    let mut take = |name: &str| by_name.remove(name).ok_or_else(|| Error::Version(format!("missing entry `{name}`")));
    let scaler = Scaler {
        mean: take("scaler.mean")?.values,
        std: take("scaler.std")?.values,
        passthrough: take("scaler.passthrough")?.values.iter().map(|v| *v != 0.0).collect(),
    };
    let epochs = take("history.epoch")?.values;
    let train_loss = take("history.train_loss")?.values;
    let val_loss = take("history.val_loss")?.values;
    if epochs.len() != train_loss.len() || epochs.len() != val_loss.len() || epochs.is_empty() {
        return Err(Error::Version("inconsistent training history".into()));
    }
    let history = (0..epochs.len())
        .map(|i| EpochRecord {
            epoch: epochs[i] as usize,
            train_loss: train_loss[i],
            val_loss: val_loss[i],
        })
        .collect();
    let model = match meta.model {
        None => None,
        Some(mm) => {
            let shape = ModelShape {
                input_channels: mm.input_channels,
                raw_channels: mm.raw_channels,
                n_targets: mm.n_targets,
                input_length: mm.input_length,
                horizon: mm.horizon,
            };
            let mut parts = Vec::with_capacity(mm.blocks.len());
            for (b, bm) in mm.blocks.into_iter().enumerate() {
                let mut layers = Vec::with_capacity(bm.activations.len());
                for (l, act) in bm.activations.iter().enumerate() {
                    let w = take(&format!("block{b}.layer{l}.weight"))?;
                    let bias = take(&format!("block{b}.layer{l}.bias"))?;
                    if w.dims.len() != 2 {
                        return Err(Error::Version(format!("block{b}.layer{l}.weight has rank {}", w.dims.len())));
                    }
                    let weights = Tensor2::from_vec(w.dims[0] as usize, w.dims[1] as usize, w.values)?;
                    layers.push(DenseLayer::new(weights, bias.values, *act)?);
                }
                parts.push((bm.config, Mlp::new(layers)?));
            }
            Some(NhitsModel::from_parts(shape, parts)?)
        }
    };
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Version(format!("unexpected entry `{extra}`")));
    }
    Ok(TrainedArtifact {
        config: meta.config,
        model,
        scaler,
        history,
        best_epoch: meta.best_epoch,
        provenance: meta.provenance,
    })
}

pub fn save_artifact(artifact: &TrainedArtifact, path: &Path) -> Result<()> {
    std::fs::write(path, encode(artifact))?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<TrainedArtifact> {
    decode(&std::fs::read(path)?)
}
