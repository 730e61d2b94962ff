use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmb_core::collect::{command_to_action, scripted_expert, Grip, TeleopCommand};
use rmb_core::datastore::to_absolute;
use rmb_core::env::rng::streams;
use rmb_core::env::{
    make_env, make_env_with_spec, register_env, Action, CounterRng, EnvError, GoalRegion, GraspTarget, ObjectKind,
    ObjectState, State, TaskId,
};
use rmb_core::sim2d::physics::{CONTACT_STIFFNESS, GRASP_RADIUS};
use rmb_core::sim2d::rope::ROPE_REST_LENGTH as REST_LENGTH;
use rmb_core::sim2d::scene::{ee_poses, nominal_layout};
use rmb_core::sim2d::{
    builtin_specs, make_planar, render_image, sample_point_cloud, simulate_step, success, KinematicChain, Pose2,
};

fn obs_bits(obs: &rmb_core::env::Observation) -> Vec<u8> {
    obs.channels.values().flat_map(|t| t.to_le_bytes()).collect()
}

fn random_action(rng: &mut ChaCha8Rng, dim: usize, scale: f32) -> Action {
    Action::new((0..dim).map(|_| rng.random_range(-scale..=scale)).collect())
}

#[test]
fn registry_contract() {
    assert!(matches!(make_env("no_such_env"), Err(EnvError::UnknownId(_))));
    let mut spec = builtin_specs().into_iter().find(|s| s.env_id == "pick_place").unwrap();
    spec.env_id = "pick_place_copy".into();
    register_env(spec.clone(), std::sync::Arc::new(make_planar)).unwrap();
    assert!(make_env("pick_place_copy").is_ok());
    assert!(matches!(register_env(spec, std::sync::Arc::new(make_planar)), Err(EnvError::DuplicateId(_))));
}

#[test]
fn reset_is_reproducible_and_seed_dependent() {
    for id in ["pick_place", "push", "rope_reach", "bimanual_pick_place", "mobile_pick_place"] {
        let mut env = make_env(id).unwrap();
        let a = obs_bits(&env.reset(7));
        let sa = env.state().unwrap().clone();
        let b = obs_bits(&env.reset(7));
        assert_eq!(a, b, "{id}");
        env.reset(8);
        let sb = env.state().unwrap().clone();
        let moved = sa.objects.iter().zip(&sb.objects).any(|(x, y)| x.position != y.position)
            || sa.rope.as_ref().map(|r| r[0]) != sb.rope.as_ref().map(|r| r[0]);
        assert!(moved, "{id}: seeds 7 and 8 gave the same scene");
    }
}

#[test]
fn zero_radius_places_objects_nominally() {
    for mut spec in builtin_specs() {
        spec.randomization_radius = 0.0;
        let mut env = make_env_with_spec(spec.clone()).unwrap();
        env.reset(123);
        let state = env.state().unwrap();
        let layout = nominal_layout(&spec, state.task);
        let got: Vec<[f64; 2]> = state.objects.iter().map(|o| o.position).collect();
        let want: Vec<[f64; 2]> = layout.objects.iter().map(|o| o.position).collect();
        assert_eq!(got, want, "{}", spec.env_id);
        assert_eq!(state.rope, layout.rope, "{}", spec.env_id);
    }
}

#[test]
fn hold_action_only_advances_time() {
    for id in ["pick_place", "push", "bimanual_pick_place", "mobile_pick_place"] {
        let mut env = make_env(id).unwrap();
        env.reset(0);
        let before = env.state().unwrap().clone();
        env.step(&Action::hold(env.spec(), &before)).unwrap();
        let after = env.state().unwrap();
        assert_eq!(after.t, 1);
        assert_eq!(State { t: 0, ..after.clone() }, before, "{id}");
    }
}

#[test]
fn wrong_action_length_is_rejected() {
    let mut env = make_env("pick_place").unwrap();
    assert!(matches!(env.step(&Action::zeros(3)), Err(EnvError::NotReset)));
    env.reset(0);
    assert!(matches!(env.step(&Action::zeros(4)), Err(EnvError::DimensionMismatch { expected: 3, got: 4 })));
}

#[test]
fn expert_solves_pick_place_seed_3() {
    let mut env = make_env("pick_place").unwrap();
    env.reset(3);
    let mut rng = CounterRng::new(3, streams::EXPERT);
    loop {
        let state = env.state().unwrap().clone();
        let cmd = scripted_expert(TaskId::PickPlace, &state, env.spec(), &mut rng);
        let r = env.step(&command_to_action(&cmd, &state, env.spec())).unwrap();
        if r.done {
            assert!(r.success);
            assert!(env.state().unwrap().t < 300);
            break;
        }
    }
}

#[test]
fn done_is_terminal() {
    let mut spec = builtin_specs().into_iter().find(|s| s.env_id == "push").unwrap();
    spec.max_steps = 3;
    let mut env = make_env_with_spec(spec).unwrap();
    env.reset(0);
    for k in 1..=3 {
        let r = env.step(&Action::zeros(3)).unwrap();
        assert_eq!(r.done, k == 3);
        assert!(!r.success);
    }
    assert!(matches!(env.step(&Action::zeros(3)), Err(EnvError::EpisodeFinished)));
}

#[test]
fn joint_deltas_are_clamped() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for id in ["pick_place", "bimanual_pick_place", "mobile_pick_place"] {
        let mut env = make_env(id).unwrap();
        env.reset(0);
        let dim = env.spec().action_dim;
        for _ in 0..50 {
            let before = env.state().unwrap().clone();
            let mut a = random_action(&mut rng, dim, 1e3);
            a.values[0] = f32::NAN;
            env.step(&a).unwrap();
            let after = env.state().unwrap();
            for (q0, q1) in before.joint_angles.iter().zip(&after.joint_angles) {
                assert!((q1 - q0).abs() <= 0.2 + 1e-12, "{id}: {q0} -> {q1}");
            }
            for k in 0..2 {
                assert!((after.base_pose[k] - before.base_pose[k]).abs() <= 0.05 + 1e-12);
            }
            assert!(after.joint_angles.iter().all(|q| q.is_finite()));
        }
    }
}

#[test]
fn ik_roundtrip_on_1000_reachable_targets() {
    let chain = KinematicChain::new(vec![1.0, 0.8], Pose2::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q_star = [rng.random_range(-3.1..3.1), rng.random_range(-3.1..3.1)];
        let target = chain.fk(&q_star).unwrap().xy();
        let q0 = [rng.random_range(-3.1..3.1), rng.random_range(-3.1..3.1)];
        let q = chain.ik(target, &q0).unwrap();
        let p = chain.fk(&q).unwrap().xy();
        worst = worst.max((p[0] - target[0]).hypot(p[1] - target[1]));
    }
    assert!(worst < 1e-6, "worst IK error {worst}");
}

#[test]
fn ik_on_three_link_chains() {
    let chain = KinematicChain::new(vec![0.6, 0.5, 0.4], Pose2::new(0.3, -0.2, 0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let q_star: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let target = chain.fk(&q_star).unwrap().xy();
        let q = chain.ik(target, &[0.1, 0.2, 0.3]).unwrap();
        let p = chain.fk(&q).unwrap().xy();
        assert!((p[0] - target[0]).hypot(p[1] - target[1]) < 1e-6);
    }
}

#[test]
fn unreachable_command_is_projected() {
    let mut env = make_env("pick_place").unwrap();
    env.reset(0);
    let state = env.state().unwrap().clone();
    let spec = env.spec().clone();
    // move straight out along the arm until past full extension
    let mut s = state.clone();
    for _ in 0..60 {
        let ee = ee_poses(&spec, &s)[0].xy();
        let n = ee[0].hypot(ee[1]);
        let cmd = TeleopCommand::moving([ee[0] / n * 0.05, ee[1] / n * 0.05], Grip::Hold);
        let a = command_to_action(&cmd, &s, &spec);
        s = simulate_step(&s, &a, &spec).unwrap();
    }
    let ee = ee_poses(&spec, &s)[0].xy();
    assert!((ee[0].hypot(ee[1]) - 1.8).abs() < 1e-3, "arm should end near full extension");
}

#[test]
fn box_contact_wrench_follows_stiffness() {
    let mut env = make_env("push").unwrap();
    env.reset(0);
    let spec = env.spec().clone();
    let mut s = env.state().unwrap().clone();
    let ee = ee_poses(&spec, &s)[0].xy();
    let h = s.objects[0].half_extent;
    // end-effector 0.02 inside the box's left face
    s.objects[0].position = [ee[0] + h - 0.02, ee[1]];
    let next = simulate_step(&s, &Action::hold(&spec, &s), &spec).unwrap();
    let w = next.wrench[0];
    assert!((w[0].hypot(w[1]) - 0.02 * CONTACT_STIFFNESS).abs() < 1e-9, "{w:?}");
    assert!((next.objects[0].position[0] - (ee[0] + h)).abs() < 1e-12, "box pushed out of the end-effector");
}

#[test]
fn closing_far_from_everything_grasps_nothing() {
    let mut env = make_env("pick_place").unwrap();
    env.reset(0);
    let spec = env.spec().clone();
    let mut s = env.state().unwrap().clone();
    let ee = ee_poses(&spec, &s)[0].xy();
    assert!(s.objects.iter().all(|o| (o.position[0] - ee[0]).hypot(o.position[1] - ee[1]) > GRASP_RADIUS));
    for _ in 0..4 {
        s = simulate_step(&s, &Action::new(vec![0.0, 0.0, 0.0]), &spec).unwrap();
    }
    assert!(s.gripper_open[0] < 0.5);
    assert_eq!(s.grasped[0], None);
}

#[test]
fn grasped_object_keeps_its_offset() {
    let mut env = make_env("pick_place").unwrap();
    env.reset(4);
    let spec = env.spec().clone();
    let mut rng = CounterRng::new(4, streams::EXPERT);
    let mut held_steps = 0;
    let mut offset: Option<[f64; 2]> = None;
    while !env.is_done() {
        let s = env.state().unwrap().clone();
        let cmd = scripted_expert(TaskId::PickPlace, &s, &spec, &mut rng);
        env.step(&command_to_action(&cmd, &s, &spec)).unwrap();
        let s = env.state().unwrap();
        let ee = ee_poses(&spec, s)[0].xy();
        let rel = [s.objects[0].position[0] - ee[0], s.objects[0].position[1] - ee[1]];
        if s.is_held(GraspTarget::Object(0)) {
            if let Some(o) = offset {
                assert!((rel[0] - o[0]).abs() <= 1e-12 && (rel[1] - o[1]).abs() <= 1e-12);
            }
            offset = Some(rel);
            held_steps += 1;
        }
    }
    assert!(held_steps > 5 && env.is_success());
}

#[test]
fn success_is_monotone_in_goal_distance() {
    let mut env = make_env("pick_place").unwrap();
    env.reset(0);
    let base = env.state().unwrap().clone();
    let goal = base.objects[0].goal_region;
    let at = |d: f64| {
        let mut s = base.clone();
        s.objects[0].position = [goal.center[0] + d, goal.center[1]];
        success(&s, TaskId::PickPlace)
    };
    let r = goal.radius;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (a, b) = (rng.random_range(0.0..r), rng.random_range(0.0..r));
        assert!(at(a.min(b)) && at(a.max(b)));
        let (c, d) = (r + rng.random_range(1e-9..1.0), r + rng.random_range(1e-9..1.0));
        assert!(!at(c) && !at(d));
    }
    assert!(at(0.0));
}

#[test]
fn rendering_and_point_clouds_are_pure() {
    let mut env = make_env("rope_reach").unwrap();
    env.reset(5);
    let spec = env.spec().clone();
    let s = env.state().unwrap().clone();
    let chains = rmb_core::sim2d::scene::arm_chains(&spec, s.base_pose);
    assert_eq!(render_image(&s, &chains, 64, 64), render_image(&s, &chains, 64, 64));
    assert_eq!(sample_point_cloud(&s, 32, 11), sample_point_cloud(&s, 32, 11));
}

fn two_object_state() -> State {
    let mut env = make_env("pick_place").unwrap();
    env.reset(0);
    let mut s = env.state().unwrap().clone();
    let goal = GoalRegion { center: [0.0, 0.0], radius: 0.1 };
    s.objects = vec![
        ObjectState { position: [-0.5, 1.0], half_extent: 0.1, kind: ObjectKind::Disc, goal_region: goal },
        ObjectState { position: [0.6, 1.2], half_extent: 0.15, kind: ObjectKind::Box, goal_region: goal },
    ];
    s.rope = None;
    s
}

#[test]
fn point_counts_follow_perimeters() {
    let s = two_object_state();
    let (disc, square) = (2.0 * std::f64::consts::PI * 0.1, 8.0 * 0.15);
    let expect_disc = 64.0 * disc / (disc + square);
    for seed in 0..50 {
        let cloud = sample_point_cloud(&s, 64, seed).to_f64_vec();
        let on_disc = cloud
            .chunks(2)
            .filter(|p| ((p[0] + 0.5).hypot(p[1] - 1.0) - 0.1).abs() < 1e-6)
            .count();
        assert!((1..=63).contains(&on_disc));
        assert!((on_disc as f64 - expect_disc).abs() <= 8.0, "seed {seed}: {on_disc} vs {expect_disc}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_bit_deterministic(env_ix in 0usize..5, seed in 0u64..1000, action_seed in 0u64..1000) {
        let id = ["pick_place", "push", "rope_reach", "bimanual_pick_place", "mobile_pick_place"][env_ix];
        let run = || {
            let mut env = make_env(id).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
            let mut trace = obs_bits(&env.reset(seed));
            let dim = env.spec().action_dim;
            for _ in 0..30 {
                let r = env.step(&random_action(&mut rng, dim, 0.3)).unwrap();
                trace.extend(obs_bits(&r.observation));
                if r.done { break; }
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn rel_channels_integrate_to_abs(env_ix in 0usize..5, seed in 0u64..1000, action_seed in 0u64..1000) {
        let id = ["pick_place", "push", "rope_reach", "bimanual_pick_place", "mobile_pick_place"][env_ix];
        let mut env = make_env(id).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
        let mut obs = vec![env.reset(seed)];
        let dim = env.spec().action_dim;
        for _ in 0..40 {
            let r = env.step(&random_action(&mut rng, dim, 0.25)).unwrap();
            obs.push(r.observation);
            if r.done { break; }
        }
        for name in ["joint_pos", "ee_pose", "base_pose"] {
            let (abs_key, rel_key) = (format!("{name}_abs"), format!("{name}_rel"));
            if obs[0].get(&abs_key).is_none() { continue; }
            let abs: Vec<f64> = obs.iter().flat_map(|o| o.get(&abs_key).unwrap().to_f64_vec()).collect();
            let rel: Vec<f64> = obs.iter().flat_map(|o| o.get(&rel_key).unwrap().to_f64_vec()).collect();
            let d = obs[0].get(&abs_key).unwrap().numel();
            prop_assert!(rel[..d].iter().all(|v| *v == 0.0));
            let rebuilt = to_absolute(&rel, &abs[..d]);
            for (a, b) in abs.iter().zip(&rebuilt) {
                prop_assert!((a - b).abs() <= 1e-9, "{} {} vs {}", name, a, b);
            }
        }
    }

    #[test]
    fn rope_segments_stay_near_rest_length(seed in 0u64..1000, action_seed in 0u64..1000) {
        let mut env = make_env("rope_reach").unwrap();
        env.reset(seed);
        let spec = env.spec().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
        let mut erng = CounterRng::new(seed, streams::EXPERT);
        // expert to the grasp, then random motions while holding the tip
        for _ in 0..200 {
            if env.is_done() { break; }
            let s = env.state().unwrap().clone();
            let a = if s.is_held(GraspTarget::RopeTip) {
                let cmd = TeleopCommand::moving([rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)], Grip::Hold);
                command_to_action(&cmd, &s, &spec)
            } else {
                command_to_action(&scripted_expert(TaskId::RopeReach, &s, &spec, &mut erng), &s, &spec)
            };
            env.step(&a).unwrap();
            let rope = env.state().unwrap().rope.clone().unwrap();
            for w in rope.windows(2) {
                let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                prop_assert!(d >= 0.95 * REST_LENGTH && d <= 1.05 * REST_LENGTH, "segment {}", d);
            }
        }
    }
}
