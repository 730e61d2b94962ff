//! Closed-loop evaluation: agents, seeded rollouts with trace hashes, and
//! success-rate reports.

mod report;

pub use report::{BenchReport, ReportEntry, SuccessReport};

use crate::collect::{command_to_action, scripted_expert};
use crate::env::rng::streams;
use crate::env::{Action, CounterRng, EnvError, Environment, Observation};
use crate::policies::{InferState, PolicyError, PolicyModel};

/// First seed of the held-out evaluation range.
pub const EVAL_BASE_SEED: u64 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("at least one episode is required")]
    NoEpisodes,
    #[error("model was trained on `{model}` but the environment is `{env}`")]
    SpecMismatch { model: String, env: String },
}

/// Anything that maps observations to actions over an episode.
pub trait Agent {
    fn name(&self) -> String;

    /// Called before each episode with its seed.
    fn reset(&mut self, seed: u64);

    fn act(&mut self, obs: &Observation, env: &Environment) -> Result<Action, BenchError>;
}

/// A learned policy; stochastic policies draw from an RNG seeded by the
/// episode seed.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    pub model: PolicyModel,
    label: String,
    state: InferState,
}

impl PolicyAgent {
    pub fn new(model: PolicyModel) -> Self {
        Self::labelled(model.kind.name().to_string(), model)
    }

    pub fn labelled(label: String, model: PolicyModel) -> Self {
        let state = model.new_state(0);
        Self { model, label, state }
    }
}

impl Agent for PolicyAgent {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn reset(&mut self, seed: u64) {
        self.state = self.model.new_state(seed);
    }

    fn act(&mut self, obs: &Observation, _env: &Environment) -> Result<Action, BenchError> {
        Ok(self.model.infer(obs, &mut self.state)?)
    }
}

/// The scripted expert, reading privileged state.
#[derive(Debug, Clone)]
pub struct ExpertAgent {
    rng: CounterRng,
}

impl Default for ExpertAgent {
    fn default() -> Self {
        Self { rng: CounterRng::new(0, streams::EXPERT) }
    }
}

impl Agent for ExpertAgent {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = CounterRng::new(seed, streams::EXPERT);
    }

    fn act(&mut self, _obs: &Observation, env: &Environment) -> Result<Action, BenchError> {
        let state = env.state().ok_or(EnvError::NotReset)?;
        let spec = env.spec();
        let cmd = scripted_expert(state.task, state, spec, &mut self.rng);
        Ok(command_to_action(&cmd, state, spec))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RolloutResult {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    /// CRC-32 over every observation and action of the episode.
    pub trace_hash: u32,
}

/// Runs one episode to success or the step limit.
pub fn rollout(env: &mut Environment, agent: &mut dyn Agent, seed: u64) -> Result<RolloutResult, BenchError> {
    let mut obs = env.reset(seed);
    agent.reset(seed);
    let mut hasher = crc32fast::Hasher::new();
    let mut steps = 0;
    let mut success = env.is_success();
    while !env.is_done() && !success {
        obs.hash_into(&mut hasher);
        let action = agent.act(&obs, env)?;
        for v in &action.values {
            hasher.update(&v.to_le_bytes());
        }
        let r = env.step(&action)?;
        obs = r.observation;
        success = r.success;
        steps += 1;
    }
    obs.hash_into(&mut hasher);
    Ok(RolloutResult { seed, success, steps, trace_hash: hasher.finalize() })
}

/// Rollouts on seeds `base_seed .. base_seed + episodes`.
pub fn evaluate(
    env: &mut Environment,
    agent: &mut dyn Agent,
    episodes: usize,
    base_seed: u64,
) -> Result<(SuccessReport, Vec<RolloutResult>), BenchError> {
    if episodes == 0 {
        return Err(BenchError::NoEpisodes);
    }
    let results = (0..episodes as u64)
        .map(|i| rollout(env, agent, base_seed + i))
        .collect::<Result<Vec<_>, _>>()?;
    let flags: Vec<bool> = results.iter().map(|r| r.success).collect();
    Ok((SuccessReport::from_outcomes(&flags), results))
}
