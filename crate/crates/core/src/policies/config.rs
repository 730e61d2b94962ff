use serde::{Deserialize, Serialize};

use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Per-step behaviour cloning.
    Bc,
    /// Action chunking with temporal ensembling.
    ActLite,
    /// DDPM over normalised action chunks.
    DiffusionLite,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Bc, PolicyKind::ActLite, PolicyKind::DiffusionLite];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Bc => "bc",
            PolicyKind::ActLite => "act_lite",
            PolicyKind::DiffusionLite => "diffusion_lite",
        }
    }

    /// Accepts the long names and the CLI short forms `act` and `diffusion`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bc" => Some(PolicyKind::Bc),
            "act" | "act_lite" => Some(PolicyKind::ActLite),
            "diffusion" | "diffusion_lite" => Some(PolicyKind::DiffusionLite),
            _ => None,
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsInput {
    Proprio,
    Image,
    PointCloud,
    TaskId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Chunk length H.
    pub chunk: usize,
    /// Temporal-ensembling decay m.
    pub ensemble_decay: f64,
    pub obs_inputs: Vec<ObsInput>,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Number of diffusion steps T_d.
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub time_embed_dim: usize,
    pub learning_rate: f64,
    /// Seeds parameter initialisation, batch order and diffusion noise.
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            chunk: 8,
            ensemble_decay: 0.1,
            obs_inputs: vec![ObsInput::Proprio, ObsInput::PointCloud],
            hidden: vec![256, 256],
            epochs: 200,
            batch_size: 64,
            diffusion_steps: 50,
            beta_start: 1e-4,
            beta_end: 0.2,
            time_embed_dim: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn uses(&self, input: ObsInput) -> bool {
        self.obs_inputs.contains(&input)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::BadConfig(m.to_string()));
        if self.chunk < 1 {
            return bad("chunk must be at least 1");
        }
        if self.diffusion_steps < 1 {
            return bad("diffusion_steps must be at least 1");
        }
        if !(0.0 < self.beta_start && self.beta_start <= self.beta_end && self.beta_end < 1.0) {
            return bad("betas must satisfy 0 < beta_start <= beta_end < 1");
        }
        if self.diffusion_steps > 1 && self.beta_start == self.beta_end {
            return bad("betas must be strictly increasing");
        }
        if self.obs_inputs.is_empty() {
            return bad("at least one observation input is required");
        }
        if self.batch_size < 1 || self.hidden.contains(&0) {
            return bad("batch size and hidden widths must be positive");
        }
        if self.time_embed_dim % 2 != 0 {
            return bad("time_embed_dim must be even");
        }
        if !(self.ensemble_decay >= 0.0) || !(self.learning_rate > 0.0) {
            return bad("ensemble_decay must be >= 0 and learning_rate > 0");
        }
        Ok(())
    }
}
