//! Episodic dataset storage.
//!
//! Episodes are stored one per file in a chunked per-channel container (see
//! [`write_episode`]); a dataset directory adds a manifest and normalisation
//! statistics.

mod dataset;
mod format;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{DType, EnvSpec, Tensor};

pub use dataset::{Dataset, DatasetWriter, EpisodeRef, Manifest};
pub use format::{
    read_channels, read_episode, validate, write_episode, ChannelReport, ValidationReport, CHUNK_ROWS, FORMAT_VERSION,
    MAGIC,
};
pub use stats::{compute_stats, stats_of, ChannelStats, NormStats, RunningStats, STD_FLOOR};

/// Name under which actions are stored and keyed in statistics.
pub const ACTION_KEY: &str = "action";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an episode file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),
    #[error("CRC mismatch in channel `{channel}`, chunk {chunk}")]
    CrcMismatch { channel: String, chunk: usize },
    #[error("file truncated in channel `{channel}`")]
    TruncatedFile { channel: String },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("corrupt chunk {chunk} in channel `{channel}`: {reason}")]
    CorruptChunk { channel: String, chunk: usize, reason: String },
    #[error("episode invariant violated: {0}")]
    InvariantViolation(String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("dataset has no episodes")]
    EmptyDataset,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Scripted,
    Keyboard,
    Web,
}

/// One recorded trajectory: every observation channel and the action, each
/// with a leading time axis of length `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub env_spec: EnvSpec,
    pub channels: BTreeMap<String, Tensor>,
    /// `[T, action_dim]`, f32.
    pub actions: Tensor,
    pub seed: u64,
    pub source: Source,
    pub success: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.shape.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvariantViolation(m));
        let t = self.len();
        if t < 1 {
            return bad("episode length must be at least 1".into());
        }
        if self.actions.dtype() != DType::F32 || self.actions.shape != [t, self.env_spec.action_dim] {
            return bad(format!("actions must be f32 [{t}, {}], got {:?}", self.env_spec.action_dim, self.actions.shape));
        }
        for (name, tensor) in &self.channels {
            if name == ACTION_KEY {
                return bad(format!("`{ACTION_KEY}` is reserved for actions"));
            }
            if tensor.shape.first() != Some(&t) {
                return bad(format!("channel {name} has leading dim {:?}, expected {t}", tensor.shape.first()));
            }
        }
        Ok(())
    }
}

/// Per-step differences of a `[T, dim]` row-major series; the first row is zero.
pub fn to_relative(abs: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; abs.len()];
    for t in 1..abs.len() / dim.max(1) {
        for j in 0..dim {
            out[t * dim + j] = abs[t * dim + j] - abs[(t - 1) * dim + j];
        }
    }
    out
}

/// Inverse of [`to_relative`] given the first absolute row.
pub fn to_absolute(rel: &[f64], first_abs: &[f64]) -> Vec<f64> {
    let dim = first_abs.len();
    let mut out = vec![0.0; rel.len()];
    if dim == 0 || rel.is_empty() {
        return out;
    }
    out[..dim].copy_from_slice(first_abs);
    for t in 1..rel.len() / dim {
        for j in 0..dim {
            out[t * dim + j] = out[(t - 1) * dim + j] + rel[t * dim + j];
        }
    }
    out
}
