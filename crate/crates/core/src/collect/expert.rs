//! Waypoint controller with privileged access to the scene.

use crate::env::{CounterRng, Embodiment, EnvSpec, GraspTarget, State, TaskId, MAX_BASE_DELTA};
use crate::sim2d::physics::GRIP_THRESHOLD;
use crate::sim2d::scene::ee_poses;

use super::command::{Grip, TeleopCommand};

/// End-effector speed of the expert, env-units per step.
pub const EXPERT_SPEED: f64 = 0.05;
/// Half-width of the uniform jitter added to each axis of every move.
pub const EXPERT_NOISE: f64 = 0.005;
/// Distance at which a waypoint counts as reached.
const ARRIVE: f64 = 0.015;
/// Distance behind the box centre from which a push starts.
const PUSH_STANDOFF: f64 = 0.16;
/// Where the bimanual arms meet to hand the object over.
const HANDOVER: [f64; 2] = [0.0, 1.2];
/// Preferred offset of the end-effector target above the mobile base.
const MOBILE_REACH: f64 = 0.9;

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

struct Ctx<'a> {
    state: &'a State,
    ees: Vec<[f64; 2]>,
    rng: &'a mut CounterRng,
}

impl Ctx<'_> {
    fn closed(&self, arm: usize) -> bool {
        self.state.gripper_open[arm] < GRIP_THRESHOLD
    }

    fn holds(&self, arm: usize, target: GraspTarget) -> bool {
        self.state.grasped[arm].is_some_and(|g| g.target == target)
    }

    /// Step of at most [`EXPERT_SPEED`] towards `target`, plus jitter.
    fn toward(&mut self, arm: usize, target: [f64; 2]) -> [f64; 2] {
        let d = sub(target, self.ees[arm]);
        let n = norm(d);
        let s = if n > EXPERT_SPEED { EXPERT_SPEED / n } else { 1.0 };
        let jx = self.rng.uniform(-EXPERT_NOISE, EXPERT_NOISE);
        let jy = self.rng.uniform(-EXPERT_NOISE, EXPERT_NOISE);
        [d[0] * s + jx, d[1] * s + jy]
    }

    fn go(&mut self, arm: usize, target: [f64; 2], grip: Grip) -> TeleopCommand {
        TeleopCommand { ee_delta: self.toward(arm, target), grip, base_delta: None, arm_select: arm }
    }

    fn near(&self, arm: usize, p: [f64; 2]) -> bool {
        norm(sub(p, self.ees[arm])) <= ARRIVE
    }

    /// Grasp-and-carry: reach `item`, close, carry it to `goal`, open.
    fn carry(&mut self, arm: usize, target: GraspTarget, item: [f64; 2], goal: [f64; 2]) -> TeleopCommand {
        if self.holds(arm, target) {
            if norm(sub(goal, item)) <= ARRIVE {
                return TeleopCommand { grip: Grip::Open, arm_select: arm, ..TeleopCommand::hold() };
            }
            let offset = sub(item, self.ees[arm]);
            return self.go(arm, sub(goal, offset), Grip::Close);
        }
        if self.near(arm, item) && !self.closed(arm) {
            return TeleopCommand { grip: Grip::Close, arm_select: arm, ..TeleopCommand::hold() };
        }
        if self.near(arm, item) {
            // closed on nothing: reopen before trying again
            return TeleopCommand { grip: Grip::Open, arm_select: arm, ..TeleopCommand::hold() };
        }
        self.go(arm, item, Grip::Open)
    }
}

fn pick_place(ctx: &mut Ctx) -> TeleopCommand {
    let (item, goal) = match ctx.state.objects.first() {
        Some(o) => (o.position, o.goal_region.center),
        None => return TeleopCommand::hold(),
    };
    ctx.carry(0, GraspTarget::Object(0), item, goal)
}

fn push(ctx: &mut Ctx) -> TeleopCommand {
    let Some(obj) = ctx.state.objects.first() else { return TeleopCommand::hold() };
    let (c, h) = (obj.position, obj.half_extent);
    let ee = ctx.ees[0];
    let behind = [c[0] - PUSH_STANDOFF, c[1]];
    let aligned = (ee[1] - c[1]).abs() <= 0.05 && ee[0] <= c[0] - 0.9 * h;
    if aligned {
        // advance along +x while steering back onto the box's centre line
        let dy = (c[1] - ee[1]).clamp(-0.02, 0.02);
        let jx = ctx.rng.uniform(-EXPERT_NOISE, EXPERT_NOISE);
        let jy = ctx.rng.uniform(-EXPERT_NOISE, EXPERT_NOISE);
        return TeleopCommand::moving([EXPERT_SPEED + jx, dy + jy], Grip::Open);
    }
    if ee[0] > c[0] - h && (ee[1] - c[1]).abs() < h + 0.05 {
        // ahead of or beside the box: go around underneath it
        return ctx.go(0, [ee[0].min(c[0]) - 0.05, c[1] - h - 0.12], Grip::Open);
    }
    ctx.go(0, behind, Grip::Open)
}

fn rope_reach(ctx: &mut Ctx) -> TeleopCommand {
    let (Some(tip), Some(goal)) = (ctx.state.rope_tip(), ctx.state.rope_goal) else { return TeleopCommand::hold() };
    if ctx.holds(0, GraspTarget::RopeTip) {
        let offset = sub(tip, ctx.ees[0]);
        return ctx.go(0, sub(goal.center, offset), Grip::Close);
    }
    ctx.carry(0, GraspTarget::RopeTip, tip, goal.center)
}

fn bimanual_pick_place(ctx: &mut Ctx) -> TeleopCommand {
    let Some(obj) = ctx.state.objects.first() else { return TeleopCommand::hold() };
    let (item, goal) = (obj.position, obj.goal_region.center);
    let target = GraspTarget::Object(0);
    if ctx.holds(1, target) {
        if ctx.closed(0) {
            return TeleopCommand { grip: Grip::Open, arm_select: 0, ..TeleopCommand::hold() };
        }
        return ctx.carry(1, target, item, goal);
    }
    if ctx.holds(0, target) {
        if norm(sub(HANDOVER, item)) > ARRIVE {
            let offset = sub(item, ctx.ees[0]);
            return ctx.go(0, sub(HANDOVER, offset), Grip::Close);
        }
        // object waits at the handover point; bring the second gripper in
        return ctx.carry(1, target, item, goal);
    }
    ctx.carry(0, target, item, HANDOVER)
}

fn mobile_pick_place(ctx: &mut Ctx) -> TeleopCommand {
    let Some(obj) = ctx.state.objects.first() else { return TeleopCommand::hold() };
    let target = if ctx.holds(0, GraspTarget::Object(0)) { obj.goal_region.center } else { obj.position };
    let mut cmd = pick_place(ctx);
    let want = [target[0], target[1] - MOBILE_REACH];
    let d = sub(want, ctx.state.base_pose);
    let n = norm(d);
    let s = if n > MAX_BASE_DELTA { MAX_BASE_DELTA / n } else { 1.0 };
    cmd.base_delta = Some([d[0] * s, d[1] * s]);
    cmd
}

/// Next command of the scripted expert.
///
/// Deterministic given the state and the generator; use one generator per
/// episode, seeded from the episode seed.
pub fn scripted_expert(task: TaskId, state: &State, spec: &EnvSpec, rng: &mut CounterRng) -> TeleopCommand {
    let ees = ee_poses(spec, state).iter().map(|p| p.xy()).collect();
    let mut ctx = Ctx { state, ees, rng };
    match (spec.embodiment, task.leaf()) {
        (Embodiment::Bimanual, TaskId::PickPlace) => bimanual_pick_place(&mut ctx),
        (Embodiment::MobileArm, TaskId::PickPlace) => mobile_pick_place(&mut ctx),
        (_, TaskId::PickPlace) => pick_place(&mut ctx),
        (_, TaskId::Push) => push(&mut ctx),
        _ => rope_reach(&mut ctx),
    }
}
