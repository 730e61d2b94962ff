//! Environment abstraction and the shared data model.
//!
//! An environment exposes the usual `reset(seed)` / `step(action)` loop. New
//! simulators, robots or tasks plug in by implementing [`EnvBackend`] and
//! registering a factory under an id.

mod environment;
mod registry;
pub mod rng;
mod tensor;
mod types;

pub use environment::{snap_to_grid, EnvBackend, Environment};
pub use registry::{env_spec, make_env, make_env_with_spec, register_env, registered_ids, EnvFactory, Registry};
pub use rng::CounterRng;
pub use tensor::{DType, Tensor, TensorData};
pub use types::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("environment id `{0}` is already registered")]
    DuplicateId(String),
    #[error("unknown environment id `{0}`")]
    UnknownId(String),
    #[error("step called before reset")]
    NotReset,
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
}
