use std::collections::VecDeque;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvSpec, Observation};
use crate::neuro::{read_model_file, timestep_embed, write_model_file, Mlp};

use super::config::{PolicyConfig, PolicyKind};
use super::ddpm::{normal_vec, Schedule};
use super::encoder::{Normalizer, PolicyNets};
use super::PolicyError;

/// Weighted average of overlapping action chunks.
///
/// A chunk emitted at step `s` predicts steps `s..s + H`. At step `t` every
/// stored chunk covering `t` contributes its entry `t - s`, weighted by
/// `exp(-m * i)` where `i = 0` is the oldest contributing chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBuffer {
    chunk: usize,
    action_dim: usize,
    decay: f64,
    entries: VecDeque<(usize, Vec<f64>)>,
}

impl EnsembleBuffer {
    pub fn new(chunk: usize, action_dim: usize, decay: f64) -> Self {
        Self { chunk, action_dim, decay, entries: VecDeque::new() }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores a `[H, action_dim]` chunk emitted at `step`.
    pub fn push(&mut self, step: usize, chunk: Vec<f64>) {
        debug_assert_eq!(chunk.len(), self.chunk * self.action_dim);
        self.entries.push_back((step, chunk));
    }

    /// Ensembled action for `step`, dropping chunks that no longer cover it.
    pub fn action(&mut self, step: usize) -> Option<Vec<f64>> {
        while let Some((s, _)) = self.entries.front() {
            if step >= s + self.chunk {
                self.entries.pop_front();
            } else {
                break;
            }
        }
        let a = self.action_dim;
        let mut out = vec![0.0; a];
        let mut total = 0.0;
        for (i, (s, c)) in self.entries.iter().filter(|(s, _)| *s <= step).enumerate() {
            let w = (-self.decay * i as f64).exp();
            let k = step - s;
            for (o, v) in out.iter_mut().zip(&c[k * a..(k + 1) * a]) {
                *o += w * v;
            }
            total += w;
        }
        (total > 0.0).then(|| out.iter().map(|v| v / total).collect())
    }
}

/// Per-rollout inference state.
#[derive(Debug, Clone)]
pub struct InferState {
    pub step: usize,
    pub buffer: EnsembleBuffer,
    /// Remaining normalised actions of the current diffusion plan.
    pub plan: VecDeque<Vec<f64>>,
    pub rng: ChaCha8Rng,
}

/// Metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    kind: PolicyKind,
    config: PolicyConfig,
    env_spec: EnvSpec,
    normalizer: Normalizer,
    widths: Vec<Vec<usize>>,
    #[serde(default)]
    training: serde_json::Value,
}

/// A trained (or randomly initialised) policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub kind: PolicyKind,
    pub config: PolicyConfig,
    pub env_spec: EnvSpec,
    pub normalizer: Normalizer,
    pub nets: PolicyNets,
    /// Resolved training configuration and loss curve.
    pub training: serde_json::Value,
}

impl PolicyModel {
    /// Head input and output widths beyond the encoder features.
    pub(crate) fn head_io(kind: PolicyKind, cfg: &PolicyConfig, action_dim: usize) -> (usize, usize) {
        let chunk = cfg.chunk * action_dim;
        match kind {
            PolicyKind::Bc => (0, action_dim),
            PolicyKind::ActLite => (0, chunk),
            PolicyKind::DiffusionLite => (chunk + cfg.time_embed_dim, chunk),
        }
    }

    /// A model with freshly initialised parameters.
    pub fn init(kind: PolicyKind, config: PolicyConfig, env_spec: EnvSpec, normalizer: Normalizer) -> Result<Self, PolicyError> {
        config.validate()?;
        let (extra, out) = Self::head_io(kind, &config, normalizer.action_dim());
        let nets = PolicyNets::new(&config, normalizer.proprio_mean.len(), extra, out)?;
        Ok(Self { kind, config, env_spec, normalizer, nets, training: serde_json::Value::Null })
    }

    pub fn schedule(&self) -> Schedule {
        Schedule::linear(self.config.diffusion_steps, self.config.beta_start, self.config.beta_end)
    }

    pub fn action_dim(&self) -> usize {
        self.normalizer.action_dim()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let meta = ModelMeta {
            kind: self.kind,
            config: self.config.clone(),
            env_spec: self.env_spec.clone(),
            normalizer: self.normalizer.clone(),
            widths: self.nets.nets().iter().map(|n| n.widths.clone()).collect(),
            training: self.training.clone(),
        };
        let meta = serde_json::to_value(&meta).map_err(|e| PolicyError::BadModel(e.to_string()))?;
        write_model_file(path, &meta, &self.nets.params())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let (meta, params) = read_model_file(path)?;
        let meta: ModelMeta = serde_json::from_value(meta).map_err(|e| PolicyError::BadModel(e.to_string()))?;
        let mut model = Self::init(meta.kind, meta.config, meta.env_spec, meta.normalizer)?;
        let widths: Vec<Vec<usize>> = model.nets.nets().iter().map(|n: &&Mlp| n.widths.clone()).collect();
        if widths != meta.widths {
            return Err(PolicyError::BadModel(format!("architecture {:?} does not match config {:?}", meta.widths, widths)));
        }
        model.nets.set_params(&params)?;
        model.training = meta.training;
        Ok(model)
    }

    pub fn new_state(&self, seed: u64) -> InferState {
        InferState {
            step: 0,
            buffer: EnsembleBuffer::new(self.config.chunk, self.action_dim(), self.config.ensemble_decay),
            plan: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Next action for `obs`, denormalised and clamped to the action bounds.
    pub fn infer(&self, obs: &Observation, state: &mut InferState) -> Result<Action, PolicyError> {
        let row = self.normalizer.prepare(&self.config, &obs.channels)?;
        let a = self.action_dim();
        let normalized = match self.kind {
            PolicyKind::Bc => self.nets.forward(&[&row], &[])?,
            PolicyKind::ActLite => {
                let chunk = self.nets.forward(&[&row], &[])?;
                state.buffer.push(state.step, chunk);
                state.buffer.action(state.step).expect("chunk just pushed covers this step")
            }
            PolicyKind::DiffusionLite => {
                if state.plan.is_empty() {
                    let feats = self.nets.features(&row)?;
                    let chunk = self.sample_chunk(&feats, &mut state.rng)?;
                    state.plan.extend(chunk.chunks(a).map(|c| c.to_vec()));
                }
                state.plan.pop_front().expect("plan refilled above")
            }
        };
        state.step += 1;
        let raw = self.normalizer.denormalize_action(&normalized);
        let bounds = self.env_spec.action_bounds();
        Ok(Action::new(raw.iter().zip(&bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi) as f32).collect()))
    }

    /// Ancestral sampling of one normalised chunk from pure noise.
    fn sample_chunk(&self, feats: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>, PolicyError> {
        let schedule = self.schedule();
        let n = self.config.chunk * self.action_dim();
        let mut x = normal_vec(rng, n);
        for t in (1..=schedule.steps()).rev() {
            let mut extra = x.clone();
            extra.extend(timestep_embed(t as u32, self.config.time_embed_dim)?);
            let eps = self.nets.head_forward(feats, &extra, 1)?;
            let z = if t > 1 { normal_vec(rng, n) } else { vec![0.0; n] };
            x = schedule.reverse_step(&x, t, &eps, &z)?;
        }
        Ok(x)
    }
}
