//! The kinematic transition function.

use std::f64::consts::PI;

use crate::env::{
    Action, ActionSlot, EnvError, EnvSpec, Grasp, GraspTarget, ObjectKind, ObjectState, State, MAX_BASE_DELTA,
    MAX_JOINT_DELTA,
};

use super::rope;
use super::scene::{arm_chains, WORKSPACE_HALF};

/// Objects whose centre is within this distance of a closing gripper are grasped.
pub const GRASP_RADIUS: f64 = 0.12;
/// Largest gripper opening change per step.
pub const GRIPPER_RATE: f64 = 0.25;
/// A gripper is closed while its opening is below this value.
pub const GRIP_THRESHOLD: f64 = 0.5;
/// Contact force per unit of penetration.
pub const CONTACT_STIFFNESS: f64 = 50.0;
pub const JOINT_LIMIT: f64 = PI;

/// Penetration depth of `point` into `obj` and the outward contact normal.
pub fn penetration(point: [f64; 2], obj: &ObjectState) -> Option<(f64, [f64; 2])> {
    let dx = point[0] - obj.position[0];
    let dy = point[1] - obj.position[1];
    match obj.kind {
        ObjectKind::Box => {
            let px = obj.half_extent - dx.abs();
            let py = obj.half_extent - dy.abs();
            if px <= 0.0 || py <= 0.0 {
                return None;
            }
            if px <= py {
                Some((px, [if dx >= 0.0 { 1.0 } else { -1.0 }, 0.0]))
            } else {
                Some((py, [0.0, if dy >= 0.0 { 1.0 } else { -1.0 }]))
            }
        }
        ObjectKind::Disc => {
            let d = dx.hypot(dy);
            if d >= obj.half_extent {
                return None;
            }
            let n = if d > 0.0 { [dx / d, dy / d] } else { [0.0, 1.0] };
            Some((obj.half_extent - d, n))
        }
    }
}

fn finite_or_zero(v: f32) -> f64 {
    if v.is_finite() {
        v as f64
    } else {
        0.0
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Nearest graspable item within [`GRASP_RADIUS`]; objects in index order
/// come before the rope tip, and the first of equally near items wins.
fn grasp_candidate(state: &State, ee: [f64; 2]) -> Option<(GraspTarget, [f64; 2])> {
    let objects = state
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (GraspTarget::Object(i), o.position));
    let tip = state.rope_tip().map(|p| (GraspTarget::RopeTip, p));
    let mut best: Option<(f64, GraspTarget, [f64; 2])> = None;
    for (target, pos) in objects.chain(tip) {
        let d = dist(ee, pos);
        if d <= GRASP_RADIUS && best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, target, pos));
        }
    }
    best.map(|(_, target, pos)| (target, pos))
}

/// Advances the scene by one step.
///
/// Order of effects: joint and base deltas are clamped and integrated; each
/// gripper servos towards its target; a gripper that just closed grasps the
/// nearest item in reach (taking it from the other gripper if needed) and a
/// gripper that just opened releases; held items follow their gripper; free
/// boxes are pushed out of any end-effector; the rope is relaxed with its tip
/// pinned to the holding gripper; contact forces are recorded.
pub fn simulate_step(state: &State, action: &Action, spec: &EnvSpec) -> Result<State, EnvError> {
    if action.values.len() != spec.action_dim {
        return Err(EnvError::DimensionMismatch { expected: spec.action_dim, got: action.values.len() });
    }
    if state.joint_angles.len() != spec.joint_count() || state.gripper_open.len() != spec.gripper_count() {
        return Err(EnvError::DimensionMismatch { expected: spec.joint_count(), got: state.joint_angles.len() });
    }
    let mut next = state.clone();
    for (slot, &raw) in spec.action_layout().iter().zip(&action.values) {
        let a = finite_or_zero(raw);
        match *slot {
            ActionSlot::JointDelta { arm, joint } => {
                let i = spec.joint_offset(arm) + joint;
                let q = next.joint_angles[i] + a.clamp(-MAX_JOINT_DELTA, MAX_JOINT_DELTA);
                next.joint_angles[i] = q.clamp(-JOINT_LIMIT, JOINT_LIMIT);
            }
            ActionSlot::GripperTarget { gripper } => {
                let g = next.gripper_open[gripper];
                let target = a.clamp(0.0, 1.0);
                next.gripper_open[gripper] = g + (target - g).clamp(-GRIPPER_RATE, GRIPPER_RATE);
            }
            ActionSlot::BaseDelta { axis } => {
                let b = next.base_pose[axis] + a.clamp(-MAX_BASE_DELTA, MAX_BASE_DELTA);
                next.base_pose[axis] = b.clamp(-WORKSPACE_HALF, WORKSPACE_HALF);
            }
        }
    }

    let ees: Vec<[f64; 2]> = arm_chains(spec, next.base_pose)
        .iter()
        .enumerate()
        .map(|(arm, chain)| {
            let off = spec.joint_offset(arm);
            chain.fk(&next.joint_angles[off..off + chain.dof()]).expect("dimension checked").xy()
        })
        .collect();

    for g in 0..spec.gripper_count() {
        let was_closed = state.gripper_open[g] < GRIP_THRESHOLD;
        let is_closed = next.gripper_open[g] < GRIP_THRESHOLD;
        if was_closed && !is_closed {
            next.grasped[g] = None;
        } else if !was_closed && is_closed {
            if let Some((target, pos)) = grasp_candidate(&next, ees[g]) {
                for other in next.grasped.iter_mut() {
                    if other.is_some_and(|h| h.target == target) {
                        *other = None;
                    }
                }
                next.grasped[g] = Some(Grasp { target, offset: [pos[0] - ees[g][0], pos[1] - ees[g][1]] });
            }
        }
    }

    let mut tip_target = None;
    for (g, held) in next.grasped.iter().enumerate() {
        let Some(grasp) = held else { continue };
        let pos = [ees[g][0] + grasp.offset[0], ees[g][1] + grasp.offset[1]];
        match grasp.target {
            GraspTarget::Object(i) => next.objects[i].position = pos,
            GraspTarget::RopeTip => tip_target = Some(pos),
        }
    }

    let mut wrench = vec![[0.0, 0.0]; spec.gripper_count()];
    for (g, ee) in ees.iter().enumerate() {
        for i in 0..next.objects.len() {
            if next.is_held(GraspTarget::Object(i)) {
                continue;
            }
            let obj = &mut next.objects[i];
            let Some((depth, n)) = penetration(*ee, obj) else { continue };
            wrench[g][0] += CONTACT_STIFFNESS * depth * n[0];
            wrench[g][1] += CONTACT_STIFFNESS * depth * n[1];
            if obj.kind == ObjectKind::Box {
                obj.position = [obj.position[0] - depth * n[0], obj.position[1] - depth * n[1]];
            }
        }
    }
    next.wrench = wrench;

    if let Some(particles) = next.rope.as_mut() {
        match tip_target {
            Some(tip) => rope::drag_tip(particles, tip),
            None => rope::relax(particles),
        }
    }

    next.t += 1;
    Ok(next)
}
