//! Demonstration collection: command sources, command-to-action resolution
//! and the record loop.

mod command;
mod expert;
mod source;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

pub use command::{command_to_action, Grip, TeleopCommand, MAX_EE_DELTA, REACH_MARGIN};
pub use expert::{scripted_expert, EXPERT_NOISE, EXPERT_SPEED};
pub use source::{CommandSource, KeyMapper, KeyboardSource, LatestCell, ScriptedSource, WebSource, KEY_STEP};

use crate::datastore::{DataError, Dataset, DatasetWriter, Episode, Source};
use crate::env::{Action, EnvError, EnvSpec, Environment, Observation, StepResult, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Accumulates one observation row and one action row per step.
#[derive(Debug, Clone)]
pub struct EpisodeRecorder {
    spec: EnvSpec,
    seed: u64,
    source: Source,
    observations: Vec<Observation>,
    actions: Vec<Vec<f32>>,
}

impl EpisodeRecorder {
    pub fn new(spec: EnvSpec, seed: u64, source: Source) -> Self {
        Self { spec, seed, source, observations: Vec::new(), actions: Vec::new() }
    }

    /// Records the observation a step started from and the action applied.
    pub fn push(&mut self, obs: Observation, action: &Action) {
        self.observations.push(obs);
        self.actions.push(action.values.clone());
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// The recorded episode, or `None` if no step was taken.
    pub fn finish(self, success: bool) -> Option<Episode> {
        if self.actions.is_empty() {
            return None;
        }
        let mut channels = BTreeMap::new();
        for c in &self.spec.observation_channels {
            let rows: Vec<&Tensor> = self.observations.iter().filter_map(|o| o.get(&c.name)).collect();
            if rows.len() == self.observations.len() {
                if let Some(t) = Tensor::stack(&rows) {
                    channels.insert(c.name.clone(), t);
                }
            }
        }
        let t = self.actions.len();
        let actions = Tensor::f32(vec![t, self.spec.action_dim], self.actions.concat());
        Some(Episode { env_spec: self.spec, channels, actions, seed: self.seed, source: self.source, success })
    }
}

/// One env step from an optional command, with optional recording. Shared by
/// [`run_session`] and the websocket service.
#[derive(Debug)]
pub struct SessionDriver {
    pub env: Environment,
    last_obs: Option<Observation>,
    recorder: Option<EpisodeRecorder>,
}

impl SessionDriver {
    pub fn new(env: Environment) -> Self {
        Self { env, last_obs: None, recorder: None }
    }

    pub fn reset(&mut self, seed: u64) -> &Observation {
        self.recorder = None;
        self.last_obs.insert(self.env.reset(seed))
    }

    pub fn start_recording(&mut self, source: Source) {
        let seed = self.env.seed();
        self.recorder = Some(EpisodeRecorder::new(self.env.spec().clone(), seed, source));
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    /// Stops recording and returns the episode (if any step was recorded).
    pub fn stop_recording(&mut self) -> Option<Episode> {
        let success = self.env.is_success();
        self.recorder.take().and_then(|r| r.finish(success))
    }

    pub fn discard_recording(&mut self) {
        self.recorder = None;
    }

    /// Applies `cmd` (or a hold when absent). Does nothing once the episode
    /// is done.
    pub fn tick(&mut self, cmd: Option<&TeleopCommand>) -> Result<Option<StepResult>, EnvError> {
        let state = self.env.state().ok_or(EnvError::NotReset)?;
        if self.env.is_done() {
            return Ok(None);
        }
        let spec = self.env.spec();
        let action = match cmd {
            Some(c) => command_to_action(c, state, spec),
            None => Action::hold(spec, state),
        };
        let result = self.env.step(&action)?;
        let prev = self.last_obs.replace(result.observation.clone());
        if let (Some(rec), Some(prev)) = (self.recorder.as_mut(), prev) {
            rec.push(prev, &action);
        }
        Ok(Some(result))
    }
}

/// Runs one episode from `source`, recording every step.
///
/// Resets the environment with `seed`, then polls, converts and steps until
/// the episode is done or the source ends. Realtime sources are paced at the
/// spec's control rate.
pub fn run_session(env: Environment, source: &mut dyn CommandSource, seed: u64) -> Result<(Episode, Environment), CollectError> {
    let mut driver = SessionDriver::new(env);
    driver.reset(seed);
    driver.start_recording(source.kind());
    let spec = driver.env.spec().clone();
    source.begin(&spec, seed);
    let period = Duration::from_secs_f64(1.0 / spec.control_hz);
    let mut next_tick = Instant::now();
    while !driver.env.is_done() && !source.finished() {
        if source.realtime() {
            let now = Instant::now();
            if now < next_tick {
                std::thread::sleep(next_tick - now);
            }
            next_tick += period;
        }
        let state = driver.env.state().ok_or(EnvError::NotReset)?;
        let cmd = source.poll(state, &spec);
        driver.tick(cmd.as_ref())?;
    }
    source.end();
    let episode = match driver.stop_recording() {
        Some(ep) => ep,
        None => {
            // ended before the first step: record a single hold step
            driver.start_recording(source.kind());
            driver.tick(None)?;
            driver.stop_recording().expect("one step recorded")
        }
    };
    Ok((episode, driver.env))
}

/// Collects `episodes` episodes with seeds `seed, seed + 1, …` into a new
/// dataset directory.
pub fn collect_dataset(
    mut env: Environment,
    source: &mut dyn CommandSource,
    episodes: usize,
    seed: u64,
    out: &Path,
    config: serde_json::Value,
) -> Result<Dataset, CollectError> {
    let mut writer = DatasetWriter::create(out, env.spec().clone())?;
    for i in 0..episodes as u64 {
        let (ep, back) = run_session(env, source, seed + i)?;
        env = back;
        writer.add(&ep)?;
        if source.finished() {
            break;
        }
    }
    Ok(writer.finish(config)?)
}
