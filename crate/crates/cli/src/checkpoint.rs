//! Versioned binary checkpoints.
//!
//! Layout: the magic bytes, a little-endian `u32` version, a `u64` header
//! length, the JSON header, then every float array as little-endian `f64`
//! in header order: parameters first, then the Adam moments when training
//! progress is stored.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use hibert_core::encoder::{ModelConfig, ModelParams};
use hibert_core::train::TrainState;
use hibert_core::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"HIBERTCK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint has {0} trailing bytes")]
    Trailing(usize),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint model config {found:?} does not match the configured {expected:?}")]
    ConfigMismatch { expected: Box<ModelConfig>, found: Box<ModelConfig> },
    #[error(transparent)]
    Model(#[from] hibert_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// Where an interrupted run stands, for resumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// `pretrain` or `finetune`.
    pub phase: String,
    /// Index of the running pre-training stage.
    pub stage: usize,
    pub state: TrainState,
    /// Log records written up to this point.
    pub log_records: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub progress: Option<Progress>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
    /// Progress with the Adam moments stripped; they follow the parameters
    /// in the binary section, one entry per name in `moments`.
    progress: Option<Progress>,
    moments: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, progress: Option<Progress>) -> Self {
        Self { params, progress }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors: Vec<TensorEntry> =
            self.params.store.iter().map(|(n, t)| TensorEntry { name: n.clone(), shape: t.shape().to_vec() }).collect();
        let mut progress = self.progress.clone();
        let mut moment_data: Vec<&[f64]> = Vec::new();
        let mut moments = Vec::new();
        if let Some(p) = &self.progress {
            for (which, map) in [("m", &p.state.adam.m), ("v", &p.state.adam.v)] {
                for (name, values) in map {
                    moments.push(TensorEntry { name: format!("{which}:{name}"), shape: vec![values.len()] });
                    moment_data.push(values);
                }
            }
        }
        if let Some(p) = &mut progress {
            p.state.adam.m.clear();
            p.state.adam.v.clear();
        }
        let header = serde_json::to_vec(&Header { model: self.params.config, tensors, progress, moments })?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let arrays = self.params.store.iter().map(|(_, t)| t.data()).chain(moment_data);
        for a in arrays {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        let mut store = ParamStore::new();
        for e in &header.tensors {
            let n = e.shape.iter().product();
            store.insert(&e.name, Tensor::new(e.shape.clone(), r.floats(n)?)?.with_grad());
        }
        let params = ModelParams::from_store(header.model, store)?;
        let mut progress = header.progress;
        for e in &header.moments {
            let values = r.floats(e.shape.iter().product())?;
            let Some(p) = progress.as_mut() else {
                return Err(CheckpointError::Truncated);
            };
            let (which, name) = e.name.split_once(':').ok_or(CheckpointError::Truncated)?;
            let map = if which == "m" { &mut p.state.adam.m } else { &mut p.state.adam.v };
            map.insert(name.to_string(), values);
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Trailing(bytes.len() - r.pos));
        }
        Ok(Self { params, progress })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
        // Write to a sibling file first so a crash never leaves a torn checkpoint.
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the stored model shape against `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if &ck.params.config != expected {
            return Err(CheckpointError::ConfigMismatch {
                expected: Box::new(*expected),
                found: Box::new(ck.params.config),
            });
        }
        Ok(ck)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Parameter names with their shapes, for diagnostics.
pub fn shapes(params: &ModelParams) -> BTreeMap<String, Vec<usize>> {
    params.store.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use hibert_core::train::TrainState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let params =
            ModelParams::init(ModelConfig::new(1, 8, 2, 0.1, 12).unwrap(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut state = TrainState::new(4);
        state.adam.step = 3;
        state.adam.m.insert("embed.word".into(), vec![0.1, -2.5e-300, f64::MIN_POSITIVE]);
        state.adam.v.insert("embed.word".into(), vec![1.0, 2.0, 3.0]);
        state.best_val = Some(1.0 / 3.0);
        state.val_history = vec![std::f64::consts::PI];
        Checkpoint::new(params, Some(Progress { phase: "pretrain".into(), stage: 1, state, log_records: 9 }))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.progress, ck.progress);
        for (name, t) in ck.params.store.iter() {
            let b = back.params.get(name).unwrap();
            let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t.data()), bits(b.data()));
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(Checkpoint::from_bytes(&longer), Err(CheckpointError::Trailing(1))));
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let mut other = ck.params.config;
        other.vocab_size += 1;
        assert!(matches!(Checkpoint::load_expecting(&path, &other), Err(CheckpointError::ConfigMismatch { .. })));
        assert!(Checkpoint::load_expecting(&path, &ck.params.config).is_ok());
    }
}
