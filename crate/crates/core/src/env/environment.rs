use std::collections::BTreeMap;

use super::tensor::{DType, Tensor};
use super::types::{Action, EnvSpec, Encoding, Observation, State, StepResult};
use super::EnvError;

/// Grid that absolute channel values are snapped to (2^-20 env-units or rad).
///
/// Any two snapped values below 8 in magnitude differ by an integer multiple of
/// the grid step that fits in an f32 mantissa, so `_rel` channels are exact
/// differences and summing them reproduces `_abs` without rounding error.
const SNAP_SCALE: f64 = (1u64 << 20) as f64;

pub fn snap_to_grid(v: f64) -> f32 {
    ((v * SNAP_SCALE).round() / SNAP_SCALE) as f32
}

/// The part of an environment a new simulator, robot or task has to provide.
///
/// [`Environment`] layers episode bookkeeping on top: step counting, done
/// handling, dimension checks and the derived `_rel` channels.
pub trait EnvBackend: Send {
    fn spec(&self) -> &EnvSpec;

    /// Scene at `t = 0` for the given seed.
    fn initial_state(&self, seed: u64) -> State;

    /// One application of the transition function. Must not touch `state.t`
    /// bookkeeping beyond incrementing it by one.
    fn transition(&self, state: &State, action: &Action) -> Result<State, EnvError>;

    fn is_success(&self, state: &State) -> bool;

    /// Every declared channel except the `_rel` ones.
    fn observe(&self, state: &State, seed: u64) -> BTreeMap<String, Tensor>;
}

pub struct Environment {
    backend: Box<dyn EnvBackend>,
    state: Option<State>,
    seed: u64,
    done: bool,
    success: bool,
    prev_abs: BTreeMap<String, Vec<f32>>,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("env_id", &self.spec().env_id)
            .field("seed", &self.seed)
            .field("t", &self.state.as_ref().map(|s| s.t))
            .field("done", &self.done)
            .finish()
    }
}

impl Environment {
    pub fn new(backend: Box<dyn EnvBackend>) -> Result<Self, EnvError> {
        backend.spec().validate()?;
        Ok(Self { backend, state: None, seed: 0, done: false, success: false, prev_abs: BTreeMap::new() })
    }

    pub fn spec(&self) -> &EnvSpec {
        self.backend.spec()
    }

    pub fn state(&self) -> Option<&State> {
        self.state.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn is_success(&self) -> bool {
        self.success
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        let state = self.backend.initial_state(seed);
        self.seed = seed;
        self.done = false;
        self.success = self.backend.is_success(&state);
        self.prev_abs.clear();
        let obs = self.observe(&state);
        self.state = Some(state);
        obs
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let dim = self.spec().action_dim;
        if action.values.len() != dim {
            return Err(EnvError::DimensionMismatch { expected: dim, got: action.values.len() });
        }
        let next = self.backend.transition(state, action)?;
        self.success = self.backend.is_success(&next);
        self.done = self.success || next.t >= self.spec().max_steps;
        let observation = self.observe(&next);
        self.state = Some(next);
        Ok(StepResult { observation, success: self.success, done: self.done })
    }

    /// Builds the full observation, snapping absolute channels to the grid and
    /// deriving `_rel` channels from the previous absolute values.
    fn observe(&mut self, state: &State) -> Observation {
        let mut channels = self.backend.observe(state, self.seed);
        let spec = self.backend.spec();
        for c in &spec.observation_channels {
            if c.encoding != Encoding::Absolute || c.dtype != DType::F32 {
                continue;
            }
            if let Some(t) = channels.get_mut(&c.name) {
                if let super::tensor::TensorData::F32(v) = &mut t.data {
                    v.iter_mut().for_each(|x| *x = snap_to_grid(*x as f64));
                }
            }
        }
        let mut next_prev = BTreeMap::new();
        for c in &spec.observation_channels {
            if c.encoding != Encoding::Relative {
                continue;
            }
            let Some(partner) = c.absolute_partner() else { continue };
            let Some(abs) = channels.get(&partner).and_then(|t| t.as_f32()) else { continue };
            let rel: Vec<f32> = match self.prev_abs.get(&partner) {
                Some(prev) => abs.iter().zip(prev).map(|(a, p)| a - p).collect(),
                None => vec![0.0; abs.len()],
            };
            next_prev.insert(partner, abs.to_vec());
            channels.insert(c.name.clone(), Tensor::f32(c.shape.clone(), rel));
        }
        self.prev_abs = next_prev;
        Observation { channels }
    }
}
