use super::*;
use crate::motion::generate_clip;
use proptest::prelude::*;
use std::f64::consts::PI;

fn p() -> SimParams {
    SimParams::default()
}

#[test]
fn default_reset() {
    let (s, w) = reset(&Scenario::default(), &p()).unwrap();
    assert_eq!(s.root_pos, [0.0, 0.0]);
    assert_eq!(s.root_yaw, 0.0);
    assert_eq!(w.target_pos, [6.0, 0.0]);
    assert_eq!(w.obstacles[0].center, [3.0, 0.0]);
    assert!(s.joint_vel.iter().chain(&s.root_vel).all(|v| *v == 0.0));
    let a = reset_perturbed(&Scenario::default(), &p(), 7, 0.1, 0.1).unwrap();
    assert_eq!(a, reset_perturbed(&Scenario::default(), &p(), 7, 0.1, 0.1).unwrap());
    assert_ne!(a.0, reset_perturbed(&Scenario::default(), &p(), 8, 0.1, 0.1).unwrap().0);
}

#[test]
fn zero_action_is_a_fixed_point() {
    let s = RobotState::at([0.0, 0.0], 0.0);
    let (n, info) = step(&s, &Action::hold(&s), &WorldState::empty(), &p()).unwrap();
    assert!(!info.collided);
    assert_eq!(RobotState { episode_time: 0.0, ..n }, s);
    assert!((n.episode_time - DT).abs() < 1e-15);
}

#[test]
fn antiphase_swing_travels_straight() {
    let mut s = RobotState::at([0.0, 0.0], 0.3);
    for k in 0..120 {
        let ph = 2.0 * PI * 1.5 * k as f64 * DT;
        let mut a = Action::hold(&s);
        a.joint_targets[joint::HIP_SWING_L] = 0.4 * ph.sin();
        a.joint_targets[joint::HIP_SWING_R] = -0.4 * ph.sin();
        let yaw0 = s.root_yaw;
        s = step(&s, &a, &WorldState::empty(), &p()).unwrap().0;
        assert!((s.root_yaw - yaw0).abs() < 1e-6);
    }
    let dir = s.root_pos[1].atan2(s.root_pos[0]);
    assert!((dir - 0.3).abs() < 1e-9);
    assert!(s.root_pos[0].hypot(s.root_pos[1]) > 1.0);
}

#[test]
fn hip_yaw_difference_turns_the_root() {
    let mut s = RobotState::at([0.0, 0.0], 0.0);
    s.joints[joint::HIP_YAW_L] = 0.25;
    s.joints[joint::HIP_YAW_R] = -0.25;
    let a = Action::hold(&s);
    for _ in 0..30 {
        s = step(&s, &a, &WorldState::empty(), &p()).unwrap().0;
    }
    assert!((s.root_yaw - 0.5).abs() < 1e-6);
}

#[test]
fn lean_back_reverses_travel() {
    let mut s = RobotState::at([0.0, 0.0], 0.0);
    s.joints[joint::KNEE_L] = -0.6;
    s.joints[joint::KNEE_R] = -0.6;
    for k in 0..60 {
        let mut a = Action::hold(&s);
        let ph = 2.0 * PI * 1.6 * k as f64 * DT;
        a.joint_targets[joint::HIP_SWING_L] = 0.4 * ph.sin();
        a.joint_targets[joint::HIP_SWING_R] = -0.4 * ph.sin();
        s = step(&s, &a, &WorldState::empty(), &p()).unwrap().0;
    }
    assert!(s.root_pos[0] < -0.5);
}

#[test]
fn non_finite_action_rejected() {
    let s = RobotState::at([0.0, 0.0], 0.0);
    let mut a = Action::hold(&s);
    a.joint_targets[3] = f64::NAN;
    assert!(step(&s, &a, &WorldState::empty(), &p()).is_err());
}

#[test]
fn observation_frame() {
    let s = RobotState::at([1.0, 2.0], 0.7);
    let o = observe(&s, [0.7f64.cos(), 0.7f64.sin()]);
    assert_eq!(o.len(), OBS_LEN);
    assert!((o[OBS_LEN - 2] - 1.0).abs() < 1e-12 && o[OBS_LEN - 1].abs() < 1e-12);
    let o = observe(&s, [-(0.7f64.cos()), -(0.7f64.sin())]);
    assert!((o[OBS_LEN - 2] + 1.0).abs() < 1e-12 && o[OBS_LEN - 1].abs() < 1e-12);
}

#[test]
fn rest_pose_end_effectors() {
    let e = end_effectors(&[0.0; NUM_JOINTS]);
    assert_eq!(e, [[0.55, 0.2], [0.55, -0.2], [0.0, 0.1], [0.0, -0.1]]);
}

#[test]
fn strike_radius() {
    let (_, w) = reset(&Scenario::default(), &p()).unwrap();
    let near = RobotState::at([5.5, 0.0], 0.0);
    let far = RobotState::at([4.0, 0.0], 0.0);
    assert!(!strike_check(&near, &w, SkillClass::Slash, &p()).target_alive);
    assert!(strike_check(&far, &w, SkillClass::Slash, &p()).target_alive);
    assert!(strike_check(&near, &w, SkillClass::Run, &p()).target_alive);
}

#[test]
fn walking_into_the_obstacle_stops_at_its_face() {
    let (mut s, w) = reset(&Scenario::default(), &p()).unwrap();
    let mut any = false;
    for k in 0..300 {
        let ph = 2.0 * PI * 2.5 * k as f64 * DT;
        let mut a = Action::hold(&s);
        a.joint_targets[joint::HIP_SWING_L] = 0.5 * ph.sin();
        a.joint_targets[joint::HIP_SWING_R] = -0.5 * ph.sin();
        let (n, info) = step(&s, &a, &w, &p()).unwrap();
        any |= info.collided;
        s = n;
        assert!(!w.obstacles[0].inflated(0.2).contains(s.root_pos));
    }
    assert!(any);
    assert!((s.root_pos[0] - 2.2).abs() < 1e-12);
}

/// Replays a reference clip's joint trajectory through the proxy.
#[test]
fn walk_clip_replay_matches_displacement() {
    let clip = generate_clip(SkillClass::Walk, 4.0, 11).unwrap();
    let f0 = clip.frames[0];
    let mut s = RobotState::from_frame(&f0, 0.0);
    for w in clip.frames.windows(2) {
        let mut a = Action::hold(&s);
        for j in 0..NUM_JOINTS {
            let v = (w[1].joints[j] - s.joints[j]) / DT;
            a.joint_targets[j] = s.joints[j] + v * p().tau_joint;
        }
        s = step(&s, &a, &WorldState::empty(), &p()).unwrap().0;
    }
    let last = clip.frames.last().unwrap();
    let ref_d = (last.root_pos[0] - f0.root_pos[0]).hypot(last.root_pos[1] - f0.root_pos[1]);
    let sim_d = (s.root_pos[0] - f0.root_pos[0]).hypot(s.root_pos[1] - f0.root_pos[1]);
    assert!((sim_d - ref_d).abs() <= 0.15 * ref_d, "{sim_d} vs {ref_d}");
}

fn rotate(v: [f64; 2], a: f64) -> [f64; 2] {
    let (s, c) = a.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn arb_state() -> impl Strategy<Value = RobotState> {
    (
        prop::array::uniform2(-5.0..5.0f64),
        -PI..PI,
        prop::array::uniform10(-1.5..1.5f64),
        prop::array::uniform10(-10.0..10.0f64),
        prop::array::uniform2(-3.0..3.0f64),
    )
        .prop_map(|(pos, yaw, joints, jv, vel)| RobotState {
            root_pos: pos,
            root_yaw: yaw,
            joints,
            joint_vel: jv,
            root_vel: vel,
            episode_time: 0.0,
        })
}

proptest! {
    #[test]
    fn observation_matches_independent_layout(s in arb_state(), th in -PI..PI) {
        let d = [th.cos(), th.sin()];
        let o = observe(&s, d);
        let rel = th - s.root_yaw;
        let speed_ang = s.root_vel[1].atan2(s.root_vel[0]) - s.root_yaw;
        let speed = s.root_vel[0].hypot(s.root_vel[1]);
        let mut expect: Vec<f64> = s.joints.to_vec();
        expect.extend(s.joint_vel);
        expect.extend([speed * speed_ang.cos(), speed * speed_ang.sin()]);
        expect.extend([s.joints[0].sin(), s.joints[0].cos(), s.joints[1].sin(), s.joints[1].cos()]);
        expect.extend([0.0, 1.0, 0.0, 1.0]);
        expect.extend([rel.cos(), rel.sin()]);
        for (a, b) in o.iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn disc_features_ignore_world_placement(s in arb_state(), off in prop::array::uniform2(-50.0..50.0f64), rot in -PI..PI) {
        let base = disc_features(&s);
        prop_assert_eq!(base.len(), DISC_FEATURES);
        let mut t = s;
        t.root_pos = [s.root_pos[0] + off[0], s.root_pos[1] + off[1]];
        prop_assert_eq!(disc_features(&t), base.clone());
        t.root_pos = rotate(s.root_pos, rot);
        t.root_vel = rotate(s.root_vel, rot);
        t.root_yaw = wrap_angle(s.root_yaw + rot);
        for (a, b) in disc_features(&t).iter().zip(&base) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn step_invariants(s in arb_state(), targets in prop::array::uniform10(-3.0..3.0f64), n in 1usize..20) {
        let world = WorldState {
            obstacles: vec![Obstacle { center: [1.0, 0.5], half_extents: [0.7, 0.4] }, Obstacle { center: [-2.0, -1.0], half_extents: [0.3, 1.5] }],
            target_pos: [0.0, 0.0],
            target_alive: true,
        };
        let mut s = s;
        for o in &world.obstacles {
            let inf = o.inflated(0.2);
            if inf.contains(s.root_pos) {
                s.root_pos = inf.project_out(s.root_pos);
            }
        }
        let a = Action { joint_targets: targets };
        for _ in 0..n {
            let (next, _) = step(&s, &a, &world, &p()).unwrap();
            prop_assert_eq!(step(&s, &a, &world, &p()).unwrap().0, next);
            prop_assert!(next.root_yaw > -PI && next.root_yaw <= PI);
            prop_assert!(next.root_vel[0].hypot(next.root_vel[1]) <= p().max_speed() + 1e-9);
            prop_assert!(next.joints.iter().all(|q| q.abs() <= JOINT_LIMIT));
            for o in &world.obstacles {
                prop_assert!(!o.inflated(0.2).contains(next.root_pos));
            }
            s = next;
        }
    }
}
