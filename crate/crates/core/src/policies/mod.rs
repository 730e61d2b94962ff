//! Imitation policies over the shared observation encoder: per-step
//! behaviour cloning, chunked prediction with temporal ensembling, and a
//! small DDPM over action chunks.

mod config;
mod ddpm;
mod encoder;
mod model;
mod train;

pub use config::{ObsInput, PolicyConfig, PolicyKind};
pub use ddpm::{ddpm_forward, Schedule};
pub use encoder::{
    pool_image, Batch, Normalizer, ObsRow, PolicyGrads, PolicyNets, IMAGE_FEATURES, NORM_FLOOR, POINT_FEATURES,
    POOLED_SIDE, TASK_COUNT, TASK_FEATURES,
};
pub use model::{EnsembleBuffer, InferState, PolicyModel};
pub use train::{build_samples, train, train_episodes, Samples};

use crate::datastore::DataError;
use crate::neuro::NeuroError;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    BadConfig(String),
    #[error("observation channel `{0}` required by the policy is missing")]
    MissingChannel(String),
    #[error("diffusion timestep {t} outside 1..={steps}")]
    BadTimestep { t: usize, steps: usize },
    #[error("dataset has no successful episodes")]
    NoSuccessfulEpisodes,
    #[error("incompatible input: {0}")]
    Incompatible(String),
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error(transparent)]
    Data(#[from] DataError),
}
