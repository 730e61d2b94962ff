use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSlot, EnvSpec, State, MAX_BASE_DELTA, MAX_JOINT_DELTA};
use crate::sim2d::scene::{arm_chains, WORKSPACE_HALF};
use crate::sim2d::{wrap_angle, KinematicsError};

/// Largest end-effector displacement a single command may request.
pub const MAX_EE_DELTA: f64 = 0.05;
/// Distance kept from the reachable boundary when projecting targets.
pub const REACH_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grip {
    Open,
    Close,
    Hold,
}

/// Device-independent operator intent for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeleopCommand {
    pub ee_delta: [f64; 2],
    pub grip: Grip,
    pub base_delta: Option<[f64; 2]>,
    pub arm_select: usize,
}

impl TeleopCommand {
    pub fn hold() -> Self {
        Self { ee_delta: [0.0, 0.0], grip: Grip::Hold, base_delta: None, arm_select: 0 }
    }

    pub fn moving(ee_delta: [f64; 2], grip: Grip) -> Self {
        Self { ee_delta, grip, ..Self::hold() }
    }

    /// The command with `ee_delta` scaled down to at most [`MAX_EE_DELTA`]
    /// and non-finite components zeroed.
    pub fn clamped(mut self) -> Self {
        let finite = |v: [f64; 2]| [v[0], v[1]].map(|x| if x.is_finite() { x } else { 0.0 });
        let d = finite(self.ee_delta);
        let n = d[0].hypot(d[1]);
        self.ee_delta = if n > MAX_EE_DELTA { [d[0] * MAX_EE_DELTA / n, d[1] * MAX_EE_DELTA / n] } else { d };
        self.base_delta = self.base_delta.map(|b| finite(b).map(|x| x.clamp(-MAX_BASE_DELTA, MAX_BASE_DELTA)));
        self
    }
}

/// Resolves a command into a joint-space action.
///
/// The selected arm's end-effector target is its current position plus the
/// clamped delta, pulled radially into the reachable annulus if needed, and
/// solved by IK seeded at the current joints. For mobile arms the IK uses the
/// base position after the commanded base move, so the end-effector keeps its
/// world target while the base drives. Other arms hold still.
pub fn command_to_action(cmd: &TeleopCommand, state: &State, spec: &EnvSpec) -> Action {
    let cmd = cmd.clamped();
    let arm = cmd.arm_select.min(spec.arm_count().saturating_sub(1));
    let base_delta = if spec.is_mobile() { cmd.base_delta.unwrap_or([0.0, 0.0]) } else { [0.0, 0.0] };
    let next_base = [0, 1].map(|i| (state.base_pose[i] + base_delta[i]).clamp(-WORKSPACE_HALF, WORKSPACE_HALF));

    let now = &arm_chains(spec, state.base_pose)[arm];
    let next = &arm_chains(spec, next_base)[arm];
    let off = spec.joint_offset(arm);
    let q = &state.joint_angles[off..off + now.dof()];
    let ee = now.fk(q).expect("state matches spec").xy();
    let target = next.project_reachable([ee[0] + cmd.ee_delta[0], ee[1] + cmd.ee_delta[1]], REACH_MARGIN);
    let solved = match next.ik(target, q) {
        Ok(sol) => sol,
        Err(KinematicsError::NoConvergence { best, .. }) => best,
        Err(_) => q.to_vec(),
    };

    let mut action = Action::hold(spec, state);
    for (i, slot) in spec.action_layout().into_iter().enumerate() {
        action.values[i] = match slot {
            ActionSlot::JointDelta { arm: a, joint } if a == arm => {
                wrap_angle(solved[joint] - q[joint]).clamp(-MAX_JOINT_DELTA, MAX_JOINT_DELTA) as f32
            }
            ActionSlot::GripperTarget { gripper } if gripper == arm => match cmd.grip {
                Grip::Open => 1.0,
                Grip::Close => 0.0,
                Grip::Hold => state.gripper_open[gripper] as f32,
            },
            ActionSlot::BaseDelta { axis } => (next_base[axis] - state.base_pose[axis]) as f32,
            _ => action.values[i],
        };
    }
    action
}
