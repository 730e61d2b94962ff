//! Task success predicates.

use crate::env::{GraspTarget, State, TaskId};

fn within(p: [f64; 2], c: [f64; 2], r: f64) -> bool {
    (p[0] - c[0]).hypot(p[1] - c[1]) <= r
}

/// Whether `state` satisfies `task`.
///
/// * pick_place: every object rests, released, inside its goal disc;
/// * push: every box centre is at or past its goal line `x = goal.center.x`;
/// * rope_reach: the rope tip is inside the rope goal disc;
/// * multi_task: the selected sub-task's predicate.
pub fn success(state: &State, task: TaskId) -> bool {
    match task.leaf() {
        TaskId::PickPlace => {
            !state.objects.is_empty()
                && state.objects.iter().enumerate().all(|(i, o)| {
                    !state.is_held(GraspTarget::Object(i)) && within(o.position, o.goal_region.center, o.goal_region.radius)
                })
        }
        TaskId::Push => {
            !state.objects.is_empty() && state.objects.iter().all(|o| o.position[0] >= o.goal_region.center[0])
        }
        _ => match (state.rope_tip(), state.rope_goal) {
            (Some(tip), Some(goal)) => within(tip, goal.center, goal.radius),
            _ => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Grasp, GoalRegion, ObjectKind, ObjectState};

    fn state_with(pos: [f64; 2]) -> State {
        State {
            t: 0,
            task: TaskId::PickPlace,
            joint_angles: vec![0.0, 0.0],
            gripper_open: vec![1.0],
            base_pose: [0.0, 0.0],
            objects: vec![ObjectState {
                position: pos,
                half_extent: 0.05,
                kind: ObjectKind::Disc,
                goal_region: GoalRegion { center: [0.5, 1.0], radius: 0.15 },
            }],
            rope: None,
            rope_goal: None,
            grasped: vec![None],
            wrench: vec![[0.0, 0.0]],
        }
    }

    #[test]
    fn released_at_goal_succeeds() {
        assert!(success(&state_with([0.5, 1.0]), TaskId::PickPlace));
    }

    #[test]
    fn held_at_goal_fails() {
        let mut s = state_with([0.5, 1.0]);
        s.grasped[0] = Some(Grasp { target: GraspTarget::Object(0), offset: [0.0, 0.0] });
        assert!(!success(&s, TaskId::PickPlace));
    }

    #[test]
    fn rope_tip_just_outside_fails() {
        let mut s = state_with([0.0, 0.0]);
        s.rope = Some(vec![[0.0, 0.0], [0.5 + 0.12 + 1e-9, 1.0]]);
        s.rope_goal = Some(GoalRegion { center: [0.5, 1.0], radius: 0.12 });
        assert!(!success(&s, TaskId::RopeReach));
        s.rope.as_mut().unwrap()[1] = [0.5 + 0.11, 1.0];
        assert!(success(&s, TaskId::RopeReach));
    }
}
