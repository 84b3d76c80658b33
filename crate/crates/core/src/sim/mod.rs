//! Planar kinematic humanoid surrogate. Joints track their targets with a
//! first-order lag; hip swing speed drives the root along the hip heading;
//! hip-yaw asymmetry turns the body.

mod scenario;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{joint, Frame, SkillClass, DT, JOINT_LIMIT, NUM_JOINTS};
use crate::numerics::wrap_angle;

pub use scenario::{Obstacle, Scenario};

/// Observation length: joints, joint velocities, local root velocity,
/// sin/cos of both hip yaws, gait clocks, local command direction.
pub const OBS_LEN: usize = 2 * NUM_JOINTS + 8 + 2 * GAIT_CLOCK_HZ.len();

/// Frequencies of the sin/cos clock features derived from episode time.
/// They match the walk and run reference gaits so a feedforward policy
/// has a phase signal to oscillate against.
pub const GAIT_CLOCK_HZ: [f64; 2] = [1.5, 2.5];

/// Discriminator feature length per state.
pub const DISC_FEATURES: usize = 2 + 2 * NUM_JOINTS + 4 + 8;

/// Proxy and world constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub dt: f64,
    /// Joint tracking time constant, s.
    pub tau_joint: f64,
    /// Joint speed limit, rad/s.
    pub omega_max: f64,
    /// Root speed per unit of mean absolute hip-swing rate, m/rad.
    pub c_gait: f64,
    /// Yaw rate per radian of hip-yaw difference, 1/s.
    pub k_turn: f64,
    pub robot_radius: f64,
    /// Mean knee angle below which the gait travels backward.
    pub backward_knee: f64,
    pub strike_radius: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: DT,
            tau_joint: 0.1,
            omega_max: 10.0,
            c_gait: 0.58,
            k_turn: 1.0,
            robot_radius: 0.2,
            backward_knee: -0.25,
            strike_radius: 1.2,
        }
    }
}

impl SimParams {
    pub fn max_speed(&self) -> f64 {
        self.c_gait * self.omega_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub root_pos: [f64; 2],
    pub root_yaw: f64,
    pub joints: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
    pub root_vel: [f64; 2],
    pub episode_time: f64,
}

impl RobotState {
    pub fn at(pos: [f64; 2], yaw: f64) -> Self {
        Self::from_frame(
            &Frame {
                root_pos: pos,
                root_yaw: wrap_angle(yaw),
                ..Frame::rest()
            },
            0.0,
        )
    }

    pub fn from_frame(f: &Frame, episode_time: f64) -> Self {
        Self {
            root_pos: f.root_pos,
            root_yaw: f.root_yaw,
            joints: f.joints,
            joint_vel: f.joint_vel,
            root_vel: f.root_vel,
            episode_time,
        }
    }

    pub fn frame(&self) -> Frame {
        Frame {
            root_pos: self.root_pos,
            root_yaw: self.root_yaw,
            joints: self.joints,
            joint_vel: self.joint_vel,
            root_vel: self.root_vel,
        }
    }

    pub fn hip_yaw_l(&self) -> f64 {
        self.joints[joint::HIP_YAW_L]
    }

    pub fn hip_yaw_r(&self) -> f64 {
        self.joints[joint::HIP_YAW_R]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub joint_targets: [f64; NUM_JOINTS],
}

impl Action {
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let joint_targets: [f64; NUM_JOINTS] = v
            .try_into()
            .map_err(|_| Error::contract(format!("action needs {NUM_JOINTS} targets, got {}", v.len())))?;
        Ok(Self { joint_targets })
    }

    /// Holds every joint at its current angle.
    pub fn hold(state: &RobotState) -> Self {
        Self {
            joint_targets: state.joints,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub obstacles: Vec<Obstacle>,
    pub target_pos: [f64; 2],
    pub target_alive: bool,
}

impl WorldState {
    pub fn empty() -> Self {
        Self {
            obstacles: Vec::new(),
            target_pos: [0.0, 0.0],
            target_alive: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub collided: bool,
}

pub fn reset(scenario: &Scenario, params: &SimParams) -> Result<(RobotState, WorldState)> {
    reset_perturbed(scenario, params, 0, 0.0, 0.0)
}

/// Reset with the start position and heading jittered uniformly within
/// `±pos_jitter` metres and `±yaw_jitter` radians, drawn from `seed`.
pub fn reset_perturbed(
    scenario: &Scenario,
    params: &SimParams,
    seed: u64,
    pos_jitter: f64,
    yaw_jitter: f64,
) -> Result<(RobotState, WorldState)> {
    scenario.validate(params.robot_radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = scenario.start;
    if pos_jitter > 0.0 {
        pos[0] += rng.gen_range(-pos_jitter..=pos_jitter);
        pos[1] += rng.gen_range(-pos_jitter..=pos_jitter);
    }
    let base_yaw = scenario.start_yaw.unwrap_or_else(|| {
        let d = [scenario.target[0] - pos[0], scenario.target[1] - pos[1]];
        if d[0] == 0.0 && d[1] == 0.0 {
            0.0
        } else {
            d[1].atan2(d[0])
        }
    });
    let yaw = if yaw_jitter > 0.0 {
        base_yaw + rng.gen_range(-yaw_jitter..=yaw_jitter)
    } else {
        base_yaw
    };
    let world = WorldState {
        obstacles: scenario.obstacles.clone(),
        target_pos: scenario.target,
        target_alive: true,
    };
    if world.obstacles.iter().any(|o| o.inflated(params.robot_radius).contains(pos)) {
        return Err(Error::Scenario("jittered start lies inside an obstacle".into()));
    }
    Ok((RobotState::at(pos, yaw), world))
}

/// Advances one control period.
pub fn step(state: &RobotState, action: &Action, world: &WorldState, p: &SimParams) -> Result<(RobotState, StepInfo)> {
    if action.joint_targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::contract("non-finite action"));
    }
    let mut next = *state;
    for j in 0..NUM_JOINTS {
        let target = action.joint_targets[j].clamp(-JOINT_LIMIT, JOINT_LIMIT);
        let v = ((target - state.joints[j]) / p.tau_joint).clamp(-p.omega_max, p.omega_max);
        next.joint_vel[j] = v;
        next.joints[j] = (state.joints[j] + v * p.dt).clamp(-JOINT_LIMIT, JOINT_LIMIT);
    }
    let (hl, hr) = (next.hip_yaw_l(), next.hip_yaw_r());
    next.root_yaw = wrap_angle(state.root_yaw + p.k_turn * (hl - hr) * p.dt);
    let heading = next.root_yaw + 0.5 * (hl + hr);
    let knee = 0.5 * (next.joints[joint::KNEE_L] + next.joints[joint::KNEE_R]);
    let sign = if knee < p.backward_knee { -1.0 } else { 1.0 };
    let speed = p.c_gait * 0.5 * (next.joint_vel[joint::HIP_SWING_L].abs() + next.joint_vel[joint::HIP_SWING_R].abs());
    next.root_vel = [sign * speed * heading.cos(), sign * speed * heading.sin()];

    let from = state.root_pos;
    let to = [from[0] + next.root_vel[0] * p.dt, from[1] + next.root_vel[1] * p.dt];
    let (pos, collided) = resolve_collision(from, to, &world.obstacles, p.robot_radius);
    if collided {
        next.root_vel = [(pos[0] - from[0]) / p.dt, (pos[1] - from[1]) / p.dt];
    }
    next.root_pos = pos;
    next.episode_time = state.episode_time + p.dt;
    Ok((next, StepInfo { collided }))
}

/// Stops the root at the first inflated-obstacle face the segment crosses.
fn resolve_collision(from: [f64; 2], to: [f64; 2], obstacles: &[Obstacle], radius: f64) -> ([f64; 2], bool) {
    let mut best: Option<(f64, usize, Obstacle)> = None;
    for o in obstacles {
        let inf = o.inflated(radius);
        if inf.contains(from) {
            return (inf.project_out(from), true);
        }
        if let Some((t, axis)) = inf.segment_entry(from, to) {
            if inf.segment_hits(from, to) && best.is_none_or(|b| t < b.0) {
                best = Some((t, axis, inf));
            }
        }
    }
    match best {
        None => (to, false),
        Some((t, axis, inf)) => {
            let mut p = [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
            let d = to[axis] - from[axis];
            p[axis] = if d > 0.0 { inf.min()[axis] } else { inf.max()[axis] };
            if inf.contains(p) {
                p = inf.project_out(p);
            }
            (p, true)
        }
    }
}

fn to_local(yaw: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
}

/// Policy observation; `d_t` is a world-frame unit direction.
pub fn observe(state: &RobotState, d_t: [f64; 2]) -> Vec<f64> {
    let mut o = Vec::with_capacity(OBS_LEN);
    o.extend_from_slice(&state.joints);
    o.extend_from_slice(&state.joint_vel);
    o.extend_from_slice(&to_local(state.root_yaw, state.root_vel));
    for h in [state.hip_yaw_l(), state.hip_yaw_r()] {
        o.push(h.sin());
        o.push(h.cos());
    }
    for hz in GAIT_CLOCK_HZ {
        let (s, c) = (std::f64::consts::TAU * hz * state.episode_time).sin_cos();
        o.push(s);
        o.push(c);
    }
    o.extend_from_slice(&to_local(state.root_yaw, d_t));
    o
}

/// Segment lengths of the top-down forward kinematics, m.
pub mod body {
    pub const SHOULDER_OFFSET: f64 = 0.2;
    pub const UPPER_ARM: f64 = 0.3;
    pub const FOREARM: f64 = 0.25;
    pub const HIP_OFFSET: f64 = 0.1;
    pub const THIGH: f64 = 0.45;
    pub const SHIN: f64 = 0.45;
}

/// Hand and foot positions in the root frame: left hand, right hand, left
/// foot, right foot. Arms rotate in the horizontal plane from pointing
/// forward; legs project their fore-aft swing along the hip heading.
pub fn end_effectors(joints: &[f64; NUM_JOINTS]) -> [[f64; 2]; 4] {
    use body::*;
    let arm = |side: f64, sh: f64, el: f64| {
        let a = sh;
        let b = sh + el;
        [
            UPPER_ARM * a.cos() + FOREARM * b.cos(),
            side * (SHOULDER_OFFSET + UPPER_ARM * a.sin() + FOREARM * b.sin()),
        ]
    };
    let leg = |side: f64, yaw: f64, swing: f64, knee: f64| {
        let reach = THIGH * swing.sin() + SHIN * (swing - knee).sin();
        [reach * yaw.cos(), side * HIP_OFFSET + reach * yaw.sin()]
    };
    [
        arm(1.0, joints[joint::SHOULDER_L], joints[joint::ELBOW_L]),
        arm(-1.0, joints[joint::SHOULDER_R], joints[joint::ELBOW_R]),
        leg(1.0, joints[joint::HIP_YAW_L], joints[joint::HIP_SWING_L], joints[joint::KNEE_L]),
        leg(-1.0, joints[joint::HIP_YAW_R], joints[joint::HIP_SWING_R], joints[joint::KNEE_R]),
    ]
}

/// Root-relative transition features; world position and heading are excluded.
pub fn disc_features(state: &RobotState) -> Vec<f64> {
    frame_features(&state.frame())
}

pub fn frame_features(f: &Frame) -> Vec<f64> {
    let mut o = Vec::with_capacity(DISC_FEATURES);
    o.extend_from_slice(&to_local(f.root_yaw, f.root_vel));
    o.extend_from_slice(&f.joints);
    o.extend_from_slice(&f.joint_vel);
    for h in [f.hip_yaw_l(), f.hip_yaw_r()] {
        o.push(h.sin());
        o.push(h.cos());
    }
    for p in end_effectors(&f.joints) {
        o.extend_from_slice(&p);
    }
    o
}

/// Knocks the target down when a slash happens within the strike radius.
pub fn strike_check(state: &RobotState, world: &WorldState, active: SkillClass, p: &SimParams) -> WorldState {
    let mut w = world.clone();
    if active == SkillClass::Slash && w.target_alive {
        let d = ((state.root_pos[0] - w.target_pos[0]).powi(2) + (state.root_pos[1] - w.target_pos[1]).powi(2)).sqrt();
        if d < p.strike_radius {
            w.target_alive = false;
        }
    }
    w
}

#[cfg(test)]
mod tests;
