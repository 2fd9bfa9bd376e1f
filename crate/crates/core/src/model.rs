//! The two networks sharing one parameter store, plus the checkpoint container.
//!
//! Checkpoint layout (little-endian):
//!
//! | bytes        | content                                               |
//! |--------------|-------------------------------------------------------|
//! | 8            | magic `FLOWANIM`                                      |
//! | 4            | `u32` format version (1)                              |
//! | 8            | `u64` header length `L`                               |
//! | `L`          | UTF-8 JSON header: model config, metadata, tensor list |
//! | rest         | every tensor's values as `f64`, in header order       |
//!
//! Each tensor entry in the header carries its name and shape, so the file
//! describes itself; values round-trip bit-exactly.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, MotionEncoder};
use crate::error::{ensure, Error, Result};
use crate::generator::{GeneratorConfig, MotionGenerator};
use crate::nn::{Conv2d, ConvShape, ParamId, ParamStore};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FLOWANIM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub generator: GeneratorConfig,
}


impl ModelConfig {
    /// Narrow networks for 64x64 synthetic scenes. `c = 8` lets the
    /// generator reach 4 px at that size.
    pub fn toy() -> Self {
        Self {
            encoder: EncoderConfig {
                widths: vec![8, 16, 16, 16],
                ..EncoderConfig::default()
            },
            generator: GeneratorConfig {
                widths: vec![8, 16, 32, 32],
                c: 8.0,
                ..GeneratorConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        ensure!(
            self.encoder.latent_dim == self.generator.latent_dim,
            Usage,
            "encoder latent_dim {} differs from generator latent_dim {}",
            self.encoder.latent_dim,
            self.generator.latent_dim
        );
        ensure!(!self.encoder.widths.is_empty(), Usage, "encoder needs at least one layer");
        ensure!(self.encoder.kernel % 2 == 1, Usage, "encoder kernel must be odd");
        Ok(())
    }
}

/// Motion encoder and generator with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: MotionEncoder,
    pub generator: MotionGenerator,
}

impl Model {
    /// Freshly initialized networks; initialization depends only on `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = MotionEncoder::new(&mut store, config.encoder.clone(), &mut rng);
        let generator = MotionGenerator::new(&mut store, config.generator.clone(), &mut rng);
        Ok(Self {
            config,
            store,
            encoder,
            generator,
        })
    }

    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let encoder = MotionEncoder::rebind(config.encoder.clone(), &store)?;
        let generator = MotionGenerator::rebind(config.generator.clone(), &store)?;
        Ok(Self {
            config,
            store,
            encoder,
            generator,
        })
    }
}

pub(crate) fn bind(store: &ParamStore, name: &str, shape: &[usize]) -> Result<ParamId> {
    let id = store
        .find(name)
        .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor `{name}`")))?;
    let actual = &store.params()[id.0].shape;
    ensure!(
        actual == shape,
        Format,
        "tensor `{name}` has shape {actual:?}, expected {shape:?}"
    );
    Ok(id)
}

pub(crate) fn bind_conv(store: &ParamStore, name: &str, shape: ConvShape) -> Result<Conv2d> {
    let weight = bind(
        store,
        &format!("{name}.weight"),
        &[shape.out_ch, shape.in_ch, shape.kernel, shape.kernel],
    )?;
    let bias = bind(store, &format!("{name}.bias"), &[shape.out_ch])?;
    Ok(Conv2d { shape, weight, bias })
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// A model plus free-form metadata (training/loss configuration, provenance).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.config.clone(),
            metadata: self.metadata.clone(),
            tensors: self
                .model
                .store
                .params()
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + self.model.store.num_scalars() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.model.store.params() {
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= 20, Format, "checkpoint truncated ({} bytes)", bytes.len());
        ensure!(&bytes[..8] == CHECKPOINT_MAGIC, Format, "not a checkpoint (bad magic)");
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        ensure!(
            version == CHECKPOINT_VERSION,
            Format,
            "unsupported checkpoint version {version}"
        );
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        ensure!(bytes.len() >= 20 + hlen, Format, "checkpoint header truncated");
        let header: Header = serde_json::from_slice(&bytes[20..20 + hlen])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let mut store = ParamStore::new();
        let mut off = 20 + hlen;
        for t in header.tensors {
            let n: usize = t.shape.iter().product();
            ensure!(
                bytes.len() >= off + n * 8,
                Format,
                "checkpoint payload truncated in `{}`",
                t.name
            );
            let data = bytes[off..off + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += n * 8;
            store.add(t.name, t.shape, data);
        }
        ensure!(off == bytes.len(), Format, "checkpoint has {} trailing bytes", bytes.len() - off);
        let model = Model::from_store(header.model, store)?;
        Ok(Self {
            model,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
