//! Task scenes: arm placement, home configurations and nominal object layouts.

use crate::env::{Embodiment, EnvSpec, GoalRegion, ObjectKind, ObjectState, State, TaskId};

use super::kinematics::{KinematicChain, Pose2};
use super::rope::{straight_rope, ROPE_PARTICLES};

pub const WORKSPACE_HALF: f64 = 2.5;
/// Horizontal offset of each bimanual arm base from the origin.
pub const BIMANUAL_BASE_X: f64 = 0.7;
pub const MOBILE_BASE_START: [f64; 2] = [0.0, -0.9];

/// Kinematic chains of every arm, given the current mobile base position.
pub fn arm_chains(spec: &EnvSpec, base_pose: [f64; 2]) -> Vec<KinematicChain> {
    spec.link_lengths
        .iter()
        .enumerate()
        .map(|(arm, links)| {
            let base = match spec.embodiment {
                Embodiment::SingleArm => Pose2::default(),
                Embodiment::Bimanual => {
                    let x = if arm == 0 { -BIMANUAL_BASE_X } else { BIMANUAL_BASE_X };
                    Pose2::new(x, 0.0, 0.0)
                }
                Embodiment::MobileArm => Pose2::new(base_pose[0], base_pose[1], 0.0),
            };
            KinematicChain { link_lengths: links.clone(), base }
        })
        .collect()
}

/// End-effector poses of every arm.
pub fn ee_poses(spec: &EnvSpec, state: &State) -> Vec<Pose2> {
    arm_chains(spec, state.base_pose)
        .iter()
        .enumerate()
        .map(|(arm, chain)| {
            let off = spec.joint_offset(arm);
            chain.fk(&state.joint_angles[off..off + chain.dof()]).expect("state matches spec")
        })
        .collect()
}

/// Scene before randomisation.
#[derive(Debug, Clone)]
pub struct Layout {
    pub base: [f64; 2],
    /// Initial end-effector position of each arm.
    pub home_ee: Vec<[f64; 2]>,
    pub objects: Vec<ObjectState>,
    pub rope: Option<Vec<[f64; 2]>>,
    pub rope_goal: Option<GoalRegion>,
}

fn object(kind: ObjectKind, position: [f64; 2], half_extent: f64, goal: [f64; 2], radius: f64) -> ObjectState {
    ObjectState { position, half_extent, kind, goal_region: GoalRegion { center: goal, radius } }
}

pub fn nominal_layout(spec: &EnvSpec, task: TaskId) -> Layout {
    let leaf = task.leaf();
    match (spec.embodiment, leaf) {
        (Embodiment::Bimanual, TaskId::PickPlace) => Layout {
            base: [0.0, 0.0],
            home_ee: vec![[-0.7, 0.85], [0.7, 0.85]],
            objects: vec![object(ObjectKind::Disc, [-0.6, 1.2], 0.06, [0.6, 1.15], 0.15)],
            rope: None,
            rope_goal: None,
        },
        (Embodiment::MobileArm, TaskId::PickPlace) => Layout {
            base: MOBILE_BASE_START,
            home_ee: vec![[0.0, -0.05]],
            objects: vec![object(ObjectKind::Disc, [-0.35, 1.0], 0.06, [0.6, 0.9], 0.15)],
            rope: None,
            rope_goal: None,
        },
        _ => {
            let mut layout = single_arm_layout(leaf);
            if spec.embodiment == Embodiment::Bimanual {
                // the second arm parks out of the way
                layout.home_ee = vec![
                    [layout.home_ee[0][0].min(-0.2), layout.home_ee[0][1]],
                    [1.3, 0.5],
                ];
            }
            layout
        }
    }
}

fn single_arm_layout(task: TaskId) -> Layout {
    match task {
        TaskId::Push => Layout {
            base: [0.0, 0.0],
            home_ee: vec![[0.3, 0.8]],
            objects: vec![object(ObjectKind::Box, [-0.1, 1.2], 0.1, [0.45, 1.2], 0.1)],
            rope: None,
            rope_goal: None,
        },
        TaskId::RopeReach => Layout {
            base: [0.0, 0.0],
            home_ee: vec![[-0.3, 0.8]],
            objects: vec![],
            rope: Some(straight_rope([-0.95, 1.35], [1.0, 0.0])),
            rope_goal: Some(GoalRegion { center: [0.55, 0.8], radius: 0.12 }),
        },
        _ => Layout {
            base: [0.0, 0.0],
            home_ee: vec![[0.0, 0.85]],
            objects: vec![object(ObjectKind::Disc, [-0.55, 1.25], 0.06, [0.55, 1.05], 0.15)],
            rope: None,
            rope_goal: None,
        },
    }
}

/// Joint seed that selects the elbow branch used for home configurations.
fn elbow_seed(dof: usize) -> Vec<f64> {
    let mut q = vec![0.0; dof];
    q[0] = 0.6;
    if dof > 1 {
        q[1] = 1.6;
    }
    for qi in q.iter_mut().skip(2) {
        *qi = -0.3;
    }
    q
}

/// Joint angles placing each arm's end-effector at its home position.
pub fn home_joints(spec: &EnvSpec, layout: &Layout) -> Vec<f64> {
    let chains = arm_chains(spec, layout.base);
    let mut q = Vec::with_capacity(spec.joint_count());
    for (arm, chain) in chains.iter().enumerate() {
        let target = layout.home_ee.get(arm).copied().unwrap_or([chain.base.x, chain.base.y + 0.8 * chain.max_reach()]);
        let target = chain.project_reachable(target, 1e-3);
        let seed = elbow_seed(chain.dof());
        let solved = match chain.ik(target, &seed) {
            Ok(sol) => sol,
            Err(super::KinematicsError::NoConvergence { best, .. }) => best,
            Err(_) => seed,
        };
        q.extend(solved.into_iter().map(super::kinematics::wrap_angle));
    }
    q
}

/// Initial scene: home configuration plus objects and rope displaced uniformly
/// within the randomisation disc.
pub fn initial_state(spec: &EnvSpec, task: TaskId, rng: &mut crate::env::CounterRng) -> State {
    let layout = nominal_layout(spec, task);
    let radius = spec.randomization_radius;
    let objects = layout
        .objects
        .iter()
        .map(|o| {
            let [dx, dy] = rng.in_disc(radius);
            ObjectState { position: [o.position[0] + dx, o.position[1] + dy], ..o.clone() }
        })
        .collect();
    let rope = layout.rope.as_ref().map(|r| {
        let [dx, dy] = rng.in_disc(radius);
        r.iter().map(|p| [p[0] + dx, p[1] + dy]).collect::<Vec<_>>()
    });
    debug_assert!(rope.as_ref().is_none_or(|r: &Vec<[f64; 2]>| r.len() == ROPE_PARTICLES));
    let grippers = spec.gripper_count();
    State {
        t: 0,
        task,
        joint_angles: home_joints(spec, &layout),
        gripper_open: vec![1.0; grippers],
        base_pose: layout.base,
        objects,
        rope,
        rope_goal: layout.rope_goal,
        grasped: vec![None; grippers],
        wrench: vec![[0.0, 0.0]; grippers],
    }
}
