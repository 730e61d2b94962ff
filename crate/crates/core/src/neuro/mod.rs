//! Small neural-network toolkit: MLPs with hand-written reverse-mode
//! gradients, an Adam optimiser, sinusoidal timestep embeddings and a
//! checksummed parameter file format.

mod adam;
mod mlp;
mod serial;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{mse, Activation, Grads, Layer, Mlp, Tape};
pub use serial::{read_model_file, write_model_file, MODEL_MAGIC, MODEL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum NeuroError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
    #[error("embedding dimension must be even, got {0}")]
    OddDim(usize),
    #[error("non-finite parameter after update: {0}")]
    NonFinite(String),
    #[error("invalid model file: {0}")]
    BadModelFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sinusoidal embedding of an integer timestep: entries `2k` and `2k + 1` are
/// `sin(t * f_k)` and `cos(t * f_k)` with `f_k = 10000^(-2k / dim)`.
pub fn timestep_embed(t: u32, dim: usize) -> Result<Vec<f64>, NeuroError> {
    if dim % 2 != 0 {
        return Err(NeuroError::OddDim(dim));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let f = 10000f64.powf(-2.0 * k as f64 / dim as f64);
        let a = t as f64 * f;
        out.push(a.sin());
        out.push(a.cos());
    }
    Ok(out)
}
