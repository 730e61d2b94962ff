use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tensor::{DType, Tensor};
use super::EnvError;

/// Largest joint change applied in one step, in radians.
pub const MAX_JOINT_DELTA: f64 = 0.2;
/// Largest base translation applied in one step, in env-units.
pub const MAX_BASE_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    PickPlace,
    Push,
    RopeReach,
    /// Composite task; the index selects pick_place (0), push (1) or rope_reach (2).
    MultiTask(u8),
}

impl TaskId {
    pub const LEAVES: [TaskId; 3] = [TaskId::PickPlace, TaskId::Push, TaskId::RopeReach];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::PickPlace => "pick_place",
            TaskId::Push => "push",
            TaskId::RopeReach => "rope_reach",
            TaskId::MultiTask(_) => "multi_task",
        }
    }

    /// The concrete task whose scene and predicate apply.
    pub fn leaf(self) -> TaskId {
        match self {
            TaskId::MultiTask(k) => Self::LEAVES[(k as usize).min(2)],
            t => t,
        }
    }

    /// Index used for the `task_id` channel and task embeddings.
    pub fn index(self) -> usize {
        match self.leaf() {
            TaskId::PickPlace => 0,
            TaskId::Push => 1,
            _ => 2,
        }
    }

    pub fn validate(self) -> Result<(), EnvError> {
        match self {
            TaskId::MultiTask(k) if k > 2 => Err(EnvError::InvalidSpec(format!("multi_task sub-task {k} not in 0..=2"))),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskId::MultiTask(k) => write!(f, "multi_task/{k}"),
            t => f.write_str(t.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embodiment {
    SingleArm,
    Bimanual,
    MobileArm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Absolute,
    Relative,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub encoding: Encoding,
}

impl ChannelSpec {
    pub fn new(name: &str, dtype: DType, shape: Vec<usize>) -> Self {
        let encoding = if name.ends_with("_rel") {
            Encoding::Relative
        } else if name.ends_with("_abs") {
            Encoding::Absolute
        } else {
            Encoding::None
        };
        Self { name: name.to_string(), dtype, shape, encoding }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Name of the absolute channel a `_rel` channel is derived from.
    pub fn absolute_partner(&self) -> Option<String> {
        self.name.strip_suffix("_rel").map(|stem| format!("{stem}_abs"))
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: &str| Err(EnvError::InvalidSpec(format!("channel {}: {msg}", self.name)));
        if self.name.ends_with("_rel") && self.encoding != Encoding::Relative {
            return bad("`_rel` channels must use relative encoding");
        }
        if self.name.ends_with("_abs") && self.encoding != Encoding::Absolute {
            return bad("`_abs` channels must use absolute encoding");
        }
        if self.numel() < 1 {
            return bad("shape must contain at least one element");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: String,
    pub embodiment: Embodiment,
    /// Link lengths of each arm, in env-units.
    pub link_lengths: Vec<Vec<f64>>,
    pub task: TaskId,
    pub action_dim: usize,
    pub observation_channels: Vec<ChannelSpec>,
    pub max_steps: usize,
    /// Bookkeeping only; time is discrete.
    pub control_hz: f64,
    pub randomization_radius: f64,
}

/// Meaning of one entry of an action vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSlot {
    JointDelta { arm: usize, joint: usize },
    GripperTarget { gripper: usize },
    BaseDelta { axis: usize },
}

impl EnvSpec {
    pub fn arm_count(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn gripper_count(&self) -> usize {
        self.arm_count()
    }

    pub fn joint_count(&self) -> usize {
        self.link_lengths.iter().map(Vec::len).sum()
    }

    pub fn is_mobile(&self) -> bool {
        self.embodiment == Embodiment::MobileArm
    }

    pub fn expected_action_dim(&self) -> usize {
        self.joint_count() + self.gripper_count() + if self.is_mobile() { 2 } else { 0 }
    }

    /// Offset of arm `arm`'s first joint in the joint vector.
    pub fn joint_offset(&self, arm: usize) -> usize {
        self.link_lengths[..arm].iter().map(Vec::len).sum()
    }

    /// Layout: all arm joints in arm order, then one gripper per arm, then the
    /// base (x, y) for mobile arms.
    pub fn action_layout(&self) -> Vec<ActionSlot> {
        let mut out = Vec::with_capacity(self.expected_action_dim());
        for (arm, links) in self.link_lengths.iter().enumerate() {
            out.extend((0..links.len()).map(|joint| ActionSlot::JointDelta { arm, joint }));
        }
        out.extend((0..self.gripper_count()).map(|gripper| ActionSlot::GripperTarget { gripper }));
        if self.is_mobile() {
            out.extend((0..2).map(|axis| ActionSlot::BaseDelta { axis }));
        }
        out
    }

    pub fn channel(&self, name: &str) -> Option<&ChannelSpec> {
        self.observation_channels.iter().find(|c| c.name == name)
    }

    /// Per-index lower and upper bounds of an action vector.
    pub fn action_bounds(&self) -> Vec<(f64, f64)> {
        self.action_layout()
            .into_iter()
            .map(|slot| match slot {
                ActionSlot::JointDelta { .. } => (-MAX_JOINT_DELTA, MAX_JOINT_DELTA),
                ActionSlot::GripperTarget { .. } => (0.0, 1.0),
                ActionSlot::BaseDelta { .. } => (-MAX_BASE_DELTA, MAX_BASE_DELTA),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |msg: String| Err(EnvError::InvalidSpec(format!("{}: {msg}", self.env_id)));
        if self.link_lengths.is_empty() {
            return invalid("at least one arm is required".into());
        }
        let arms_ok = match self.embodiment {
            Embodiment::SingleArm | Embodiment::MobileArm => self.arm_count() == 1,
            Embodiment::Bimanual => self.arm_count() == 2,
        };
        if !arms_ok {
            return invalid(format!("{:?} cannot have {} arms", self.embodiment, self.arm_count()));
        }
        if self.link_lengths.iter().flatten().any(|&l| !(l > 0.0)) {
            return invalid("link lengths must be positive".into());
        }
        if self.action_dim != self.expected_action_dim() {
            return invalid(format!("action_dim {} != expected {}", self.action_dim, self.expected_action_dim()));
        }
        let mut names = BTreeSet::new();
        for c in &self.observation_channels {
            c.validate()?;
            if !names.insert(c.name.as_str()) {
                return invalid(format!("duplicate channel {}", c.name));
            }
        }
        if !(self.randomization_radius >= 0.0) {
            return invalid("randomization_radius must be non-negative".into());
        }
        if self.max_steps < 1 {
            return invalid("max_steps must be at least 1".into());
        }
        if !(self.control_hz > 0.0) {
            return invalid("control_hz must be positive".into());
        }
        self.task.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Box,
    Disc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub position: [f64; 2],
    pub half_extent: f64,
    pub kind: ObjectKind,
    /// For push tasks the goal is the line `x = center[0]`.
    pub goal_region: GoalRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspTarget {
    Object(usize),
    /// The last particle of the rope.
    RopeTip,
}

/// A held item and its position relative to the gripper, fixed at grasp time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub target: GraspTarget,
    pub offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: usize,
    pub task: TaskId,
    /// Joint angles of all arms, concatenated in arm order (rad).
    pub joint_angles: Vec<f64>,
    /// One opening value in [0, 1] per gripper.
    pub gripper_open: Vec<f64>,
    /// Mobile base position; the origin for fixed-base embodiments.
    pub base_pose: [f64; 2],
    pub objects: Vec<ObjectState>,
    pub rope: Option<Vec<[f64; 2]>>,
    pub rope_goal: Option<GoalRegion>,
    pub grasped: Vec<Option<Grasp>>,
    /// Contact force on each end-effector from the last step.
    pub wrench: Vec<[f64; 2]>,
}

impl State {
    pub fn rope_tip(&self) -> Option<[f64; 2]> {
        self.rope.as_ref().and_then(|r| r.last().copied())
    }

    pub fn is_held(&self, target: GraspTarget) -> bool {
        self.grasped.iter().flatten().any(|g| g.target == target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub values: Vec<f32>,
}

impl Action {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    /// An action that keeps every joint still and every gripper at its
    /// current opening.
    pub fn hold(spec: &EnvSpec, state: &State) -> Self {
        let values = spec
            .action_layout()
            .into_iter()
            .map(|slot| match slot {
                ActionSlot::GripperTarget { gripper } => state.gripper_open[gripper] as f32,
                _ => 0.0,
            })
            .collect();
        Self { values }
    }
}

/// Named per-step sensor readings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub channels: BTreeMap<String, Tensor>,
}

impl Observation {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.channels.get(name)
    }

    /// Bytes of every channel in name order; the basis of rollout trace hashes.
    pub fn hash_into(&self, hasher: &mut crc32fast::Hasher) {
        for (name, t) in &self.channels {
            hasher.update(name.as_bytes());
            hasher.update(&t.to_le_bytes());
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub success: bool,
    pub done: bool,
}
