//! Named parameter tensors, seeded initialization and the checkpoint format.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::binio::{FrameError, Reader, Writer};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered list of named tensors. Models address entries by index; names
/// exist for checkpoints and error messages.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Register every tensor as a trainable leaf, or as a constant when frozen.
    pub fn register(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect()
    }

    /// SHA-256 over names, shapes and 32-bit values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u32).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.as_f32().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Truncated normal (σ = 0.02, resampled beyond 2σ).
pub fn truncated_normal<T: Real>(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor<T> {
    const SIGMA: f64 = 0.02;
    let normal = Normal::new(0.0, SIGMA).expect("valid sigma");
    Tensor::from_fn(rows, cols, |_, _| loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * SIGMA {
            break T::of(v);
        }
    })
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("checkpoint truncated: {0}")]
    Truncated(FrameError),
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint corrupted: {0}")]
    Checksum(FrameError),
    #[error("checkpoint config: {0}")]
    Config(String),
    #[error("checkpoint lacks tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint has unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {name}: checkpoint shape {found:?} does not match model shape {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl From<FrameError> for CheckpointError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Truncated { .. } => CheckpointError::Truncated(e),
            FrameError::Checksum { .. } => CheckpointError::Checksum(e),
            other => CheckpointError::Format(other.to_string()),
        }
    }
}

/// Serialize a JSON config blob and named 32-bit tensors.
pub fn encode_checkpoint(magic: &[u8; 4], config_json: &str, params: &ParamSet<f32>) -> Vec<u8> {
    let mut w = Writer::new(magic);
    w.u32(CHECKPOINT_VERSION);
    w.u32(config_json.len() as u32);
    w.bytes(config_json.as_bytes());
    for (name, t) in params.names.iter().zip(&params.tensors) {
        w.u16(name.len() as u16);
        w.bytes(name.as_bytes());
        w.u8(t.shape().len() as u8);
        for &d in t.shape() {
            w.u32(d as u32);
        }
        w.f32s(t.data());
    }
    w.finish()
}

pub fn decode_checkpoint(
    bytes: &[u8],
    magic: &[u8; 4],
) -> Result<(String, ParamSet<f32>), CheckpointError> {
    let mut r = Reader::open(bytes, magic)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let len = r.u32()? as usize;
    let config = std::str::from_utf8(r.bytes(len)?)
        .map_err(|e| CheckpointError::Config(e.to_string()))?
        .to_string();
    let mut params = ParamSet::new();
    while !r.is_at_end() {
        let n = r.u16()? as usize;
        let name = String::from_utf8_lossy(r.bytes(n)?).into_owned();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = count
            .ok_or_else(|| CheckpointError::Format(format!("tensor {name}: shape overflow")))?;
        let data = r.f32s(count)?;
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Format(e.to_string()))?;
        params.push(name, t);
    }
    r.finish()?;
    Ok((config, params))
}

/// Require `loaded` to carry exactly the tensors of `expected`, in order and shape.
pub fn check_layout(
    expected: &ParamSet<f32>,
    loaded: &ParamSet<f32>,
) -> Result<(), CheckpointError> {
    for (i, name) in expected.names.iter().enumerate() {
        match loaded.names.get(i) {
            Some(found) if found == name => {
                let (e, f) = (expected.tensors[i].shape(), loaded.tensors[i].shape());
                if e != f {
                    return Err(CheckpointError::Shape {
                        name: name.clone(),
                        expected: e.to_vec(),
                        found: f.to_vec(),
                    });
                }
            }
            _ => return Err(CheckpointError::MissingTensor(name.clone())),
        }
    }
    if let Some(extra) = loaded.names.get(expected.len()) {
        return Err(CheckpointError::UnexpectedTensor(extra.clone()));
    }
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CheckpointError> {
    fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}
