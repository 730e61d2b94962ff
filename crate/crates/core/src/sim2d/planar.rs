//! The planar environment backend and the builtin environment catalogue.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::env::rng::streams;
use crate::env::{
    Action, ChannelSpec, CounterRng, DType, Embodiment, EnvBackend, EnvError, EnvSpec, Environment, Registry, State,
    TaskId, Tensor,
};

use super::physics::simulate_step;
use super::pointcloud::{sample_point_cloud, POINT_CLOUD_SIZE};
use super::render::{render_image, IMAGE_SIZE};
use super::scene::{arm_chains, ee_poses, initial_state};
use super::tasks::success;

pub const DEFAULT_MAX_STEPS: usize = 300;
pub const DEFAULT_CONTROL_HZ: f64 = 10.0;
pub const DEFAULT_RANDOMIZATION_RADIUS: f64 = 0.1;

pub struct PlanarEnv {
    spec: EnvSpec,
}

impl PlanarEnv {
    pub fn new(spec: EnvSpec) -> Result<Self, EnvError> {
        spec.validate()?;
        Ok(Self { spec })
    }

    /// Task played for an episode: a composite spec cycles through its
    /// sub-tasks with the seed.
    pub fn episode_task(&self, seed: u64) -> TaskId {
        match self.spec.task {
            TaskId::MultiTask(_) => TaskId::MultiTask((seed % 3) as u8),
            t => t,
        }
    }
}

impl EnvBackend for PlanarEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self, seed: u64) -> State {
        let mut rng = CounterRng::new(seed, streams::SCENE);
        initial_state(&self.spec, self.episode_task(seed), &mut rng)
    }

    fn transition(&self, state: &State, action: &Action) -> Result<State, EnvError> {
        simulate_step(state, action, &self.spec)
    }

    fn is_success(&self, state: &State) -> bool {
        success(state, state.task)
    }

    fn observe(&self, state: &State, seed: u64) -> BTreeMap<String, Tensor> {
        let spec = &self.spec;
        let mut out = BTreeMap::new();
        for c in &spec.observation_channels {
            let tensor = match c.name.as_str() {
                "joint_pos_abs" => f32_tensor(c, state.joint_angles.iter().copied()),
                "ee_pose_abs" => f32_tensor(c, ee_poses(spec, state).iter().flat_map(|p| [p.x, p.y, p.theta])),
                "base_pose_abs" => f32_tensor(c, state.base_pose.iter().copied()),
                "gripper" => f32_tensor(c, state.gripper_open.iter().copied()),
                "wrench" => f32_tensor(c, state.wrench.iter().flatten().copied()),
                "image" if c.dtype == DType::U8 && c.shape.len() == 3 && c.shape[2] == 3 => {
                    render_image(state, &arm_chains(spec, state.base_pose), c.shape[1], c.shape[0])
                }
                "point_cloud" if c.shape.len() == 2 && c.shape[1] == 2 => {
                    sample_point_cloud(state, c.shape[0], seed)
                }
                "task_id" if c.dtype == DType::I32 => {
                    let mut v = vec![0; c.numel()];
                    v[0] = state.task.index() as i32;
                    Tensor::i32(c.shape.clone(), v)
                }
                // `_rel` channels are derived by the environment wrapper
                n if n.ends_with("_rel") => continue,
                _ => Tensor::zeros(c.dtype, c.shape.clone()),
            };
            out.insert(c.name.clone(), tensor);
        }
        out
    }
}

fn f32_tensor(c: &ChannelSpec, values: impl Iterator<Item = f64>) -> Tensor {
    let mut v: Vec<f32> = values.map(|x| x as f32).collect();
    v.resize(c.numel(), 0.0);
    Tensor::f32(c.shape.clone(), v)
}

/// Channels recorded by the planar environments.
pub fn default_channels(embodiment: Embodiment, link_lengths: &[Vec<f64>]) -> Vec<ChannelSpec> {
    let joints: usize = link_lengths.iter().map(Vec::len).sum();
    let arms = link_lengths.len();
    let mut out = vec![
        ChannelSpec::new("joint_pos_abs", DType::F32, vec![joints]),
        ChannelSpec::new("joint_pos_rel", DType::F32, vec![joints]),
        ChannelSpec::new("ee_pose_abs", DType::F32, vec![3 * arms]),
        ChannelSpec::new("ee_pose_rel", DType::F32, vec![3 * arms]),
        ChannelSpec::new("gripper", DType::F32, vec![arms]),
    ];
    if embodiment == Embodiment::MobileArm {
        out.push(ChannelSpec::new("base_pose_abs", DType::F32, vec![2]));
        out.push(ChannelSpec::new("base_pose_rel", DType::F32, vec![2]));
    }
    out.extend([
        ChannelSpec::new("wrench", DType::F32, vec![2 * arms]),
        ChannelSpec::new("image", DType::U8, vec![IMAGE_SIZE, IMAGE_SIZE, 3]),
        ChannelSpec::new("point_cloud", DType::F32, vec![POINT_CLOUD_SIZE, 2]),
        ChannelSpec::new("task_id", DType::I32, vec![1]),
    ]);
    out
}

pub fn make_spec(env_id: &str, embodiment: Embodiment, task: TaskId) -> EnvSpec {
    let link_lengths = match embodiment {
        Embodiment::SingleArm => vec![vec![1.0, 0.8]],
        Embodiment::Bimanual => vec![vec![0.9, 0.7], vec![0.9, 0.7]],
        Embodiment::MobileArm => vec![vec![0.8, 0.6]],
    };
    let joints: usize = link_lengths.iter().map(Vec::len).sum();
    let arms = link_lengths.len();
    EnvSpec {
        env_id: env_id.to_string(),
        embodiment,
        observation_channels: default_channels(embodiment, &link_lengths),
        action_dim: joints + arms + if embodiment == Embodiment::MobileArm { 2 } else { 0 },
        link_lengths,
        task,
        max_steps: DEFAULT_MAX_STEPS,
        control_hz: DEFAULT_CONTROL_HZ,
        randomization_radius: DEFAULT_RANDOMIZATION_RADIUS,
    }
}

pub fn builtin_specs() -> Vec<EnvSpec> {
    vec![
        make_spec("pick_place", Embodiment::SingleArm, TaskId::PickPlace),
        make_spec("push", Embodiment::SingleArm, TaskId::Push),
        make_spec("rope_reach", Embodiment::SingleArm, TaskId::RopeReach),
        make_spec("multi_task", Embodiment::SingleArm, TaskId::MultiTask(0)),
        make_spec("bimanual_pick_place", Embodiment::Bimanual, TaskId::PickPlace),
        make_spec("mobile_pick_place", Embodiment::MobileArm, TaskId::PickPlace),
    ]
}

/// Builds a planar environment from a spec.
pub fn make_planar(spec: EnvSpec) -> Result<Environment, EnvError> {
    Environment::new(Box::new(PlanarEnv::new(spec)?))
}

pub fn register_builtins(reg: &mut Registry) -> Result<(), EnvError> {
    for spec in builtin_specs() {
        reg.register(spec, Arc::new(make_planar))?;
    }
    Ok(())
}
