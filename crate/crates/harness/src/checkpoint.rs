//! Versioned binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "PFIT"                      4 bytes
//! version                     u32 (= 1)
//! layer count + 1             u32, then that many u32 layer widths
//! activation code             u32
//! parameter count n           u64
//! weights                     n x f64
//! rng key                     32 bytes
//! rng stream                  u64
//! rng word position           u128
//! step count                  u64
//! config digest               32 bytes (SHA-256 of the config echo)
//! ```

use std::path::Path;

use profit_core::mlp::{Activation, Architecture, Mlp};
use profit_core::rng::RngSnapshot;
use profit_core::ParamVector;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PFIT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint has {0} trailing bytes")]
    Trailing(usize),
    #[error("checkpoint architecture is invalid: {0}")]
    Architecture(profit_core::Error),
    #[error("unknown activation code {0}")]
    Activation(u32),
    #[error("checkpoint stores {stored} weights, architecture {dims:?} needs {expected}")]
    ParamCount { stored: u64, expected: usize, dims: Vec<usize> },
    #[error("checkpoint weights are not finite: {0}")]
    Weights(profit_core::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub rng: RngSnapshot,
    /// Training steps behind these weights; 0 means freshly initialized.
    pub steps: u64,
    pub config_digest: [u8; 32],
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.model.architecture();
        let params = self.model.params().as_slice();
        let mut out = Vec::with_capacity(128 + 8 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(arch.dims().len() as u32).to_le_bytes());
        for &d in arch.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&arch.activation().code().to_le_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for w in params {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.rng.key);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&self.steps.to_le_bytes());
        out.extend_from_slice(&self.config_digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes };
        if r.take::<4>("magic")? != *MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(r.take("version")?);
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let n_dims = u32::from_le_bytes(r.take("layer count")?) as usize;
        if n_dims > r.bytes.len() / 4 {
            return Err(CheckpointError::Truncated("layer widths"));
        }
        let dims = (0..n_dims)
            .map(|_| Ok(u32::from_le_bytes(r.take("layer widths")?) as usize))
            .collect::<Result<Vec<_>, CheckpointError>>()?;
        let code = u32::from_le_bytes(r.take("activation")?);
        let activation = Activation::from_code(code).ok_or(CheckpointError::Activation(code))?;
        let arch = Architecture::new(dims.clone(), activation).map_err(CheckpointError::Architecture)?;
        let n = u64::from_le_bytes(r.take("parameter count")?);
        if n != arch.param_count() as u64 {
            return Err(CheckpointError::ParamCount { stored: n, expected: arch.param_count(), dims });
        }
        let raw = r.slice(8 * arch.param_count(), "weights")?;
        let weights: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let params = ParamVector::new(weights).map_err(CheckpointError::Weights)?;
        let rng = RngSnapshot {
            key: r.take("rng key")?,
            stream: u64::from_le_bytes(r.take("rng stream")?),
            word_pos: u128::from_le_bytes(r.take("rng position")?),
        };
        let steps = u64::from_le_bytes(r.take("step count")?);
        let config_digest = r.take("config digest")?;
        if !r.bytes.is_empty() {
            return Err(CheckpointError::Trailing(r.bytes.len()));
        }
        let model = Mlp::unflatten(arch, params).map_err(CheckpointError::Weights)?;
        Ok(Self { model, rng, steps, config_digest })
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        crate::table::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn take<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], CheckpointError> {
        Ok(self.slice(N, what)?.try_into().expect("slice of length N"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use profit_core::mlp::Init;
    use profit_core::rng;

    fn sample() -> Checkpoint {
        let arch = Architecture::with_hidden(3, Activation::Tanh);
        let mut r = rng::stream(9, rng::STREAM_INIT);
        let model = Mlp::init(arch, Init::FanInUniform, &mut r);
        Checkpoint { model, rng: RngSnapshot::capture(&r), steps: 42, config_digest: [7; 32] }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn layout_size() {
        // 4 + 4 + 4 + 4*4 + 4 + 8 + 8n + 32 + 8 + 16 + 8 + 32
        let c = sample();
        let n = c.model.architecture().param_count();
        assert_eq!(n, 9 + 12 + 4);
        assert_eq!(c.to_bytes().len(), 136 + 8 * n);
    }

    #[test]
    fn version_is_checked_before_weights() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        bytes.truncate(20);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Version { found: 2 })));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(b"NOPE"), Err(CheckpointError::BadMagic)));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(CheckpointError::Trailing(1))));
        let mut bad_n = bytes.clone();
        let n_at = 4 + 4 + 4 + 16 + 4;
        bad_n[n_at..n_at + 8].copy_from_slice(&3u64.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&bad_n), Err(CheckpointError::ParamCount { stored: 3, .. })));
        let mut nan = bytes;
        nan[n_at + 8..n_at + 16].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&nan), Err(CheckpointError::Weights(_))));
    }
}
