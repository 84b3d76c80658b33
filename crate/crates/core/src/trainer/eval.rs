use super::nets::{policy_input, Agent};
use crate::error::Result;
use crate::motion::SkillClass;
use crate::numerics::wrap_angle;
use crate::rewards::{heading_vec, task_reward, RewardWeights};
use crate::sim::{step, Action, RobotState, SimParams, WorldState};

impl Agent {
    /// Mean action of the policy.
    pub fn act_greedy(&self, state: &RobotState, d_t: [f64; 2], z: &[f64]) -> Result<Action> {
        Action::from_slice(&self.policy.mean(&policy_input(state, d_t, z))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStep {
    pub state: RobotState,
    pub d_t: [f64; 2],
    pub r_task: f64,
    pub collided: bool,
}

/// Angle between the root heading and `d`, radians in [0, π].
pub fn heading_error(state: &RobotState, d: [f64; 2]) -> f64 {
    let h = heading_vec(state.root_yaw);
    (h[0] * d[0] + h[1] * d[1]).clamp(-1.0, 1.0).acos()
}

/// Greedy rollout of `steps` steps; `direction` supplies d_t from the current state.
pub fn run_greedy(
    agent: &Agent,
    z: &[f64],
    init: RobotState,
    world: &WorldState,
    sim: &SimParams,
    weights: &RewardWeights,
    steps: usize,
    mut direction: impl FnMut(&RobotState) -> [f64; 2],
) -> Result<Vec<EvalStep>> {
    let mut s = init;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let d = direction(&s);
        let a = agent.act_greedy(&s, d, z)?;
        let (next, info) = step(&s, &a, world, sim)?;
        out.push(EvalStep {
            state: next,
            d_t: d,
            r_task: task_reward(&next, d, weights)?,
            collided: info.collided,
        });
        s = next;
    }
    Ok(out)
}

/// Outcomes of the reward-structure comparison for one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AblationMetrics {
    /// Mean travel-heading error while running toward +x from a start
    /// facing +x, radians.
    pub run_heading_error: f64,
    /// The same error averaged over runs from the turning start headings,
    /// so it includes the turn toward +x.
    pub turning_run_heading_error: f64,
    /// Displacement along −x after dodging with d_t = +x, m.
    pub dodge_backward: f64,
    /// Largest distance from the start while slashing, m.
    pub slash_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationProtocol {
    /// Start headings for the turning run episodes, radians.
    pub turn_start_yaws: [f64; 8],
    pub run_steps: usize,
    /// Length of the dodge and slash episodes.
    pub stationary_steps: usize,
}

impl Default for AblationProtocol {
    fn default() -> Self {
        Self {
            turn_start_yaws: std::array::from_fn(|k| (22.5 + 45.0 * k as f64).to_radians()),
            run_steps: 300,
            stationary_steps: 60,
        }
    }
}

/// Direction of travel implied by the locomotion proxy: root yaw plus the
/// mean hip yaw.
pub fn travel_heading(state: &RobotState) -> f64 {
    state.root_yaw + 0.5 * (state.hip_yaw_l() + state.hip_yaw_r())
}

pub fn ablation_eval(
    agent: &Agent,
    latent: impl Fn(SkillClass) -> Result<Vec<f64>>,
    sim: &SimParams,
    weights: &RewardWeights,
    protocol: &AblationProtocol,
) -> Result<AblationMetrics> {
    let d = [1.0, 0.0];
    let world = WorldState::empty();
    let z_run = latent(SkillClass::Run)?;
    let run_error = |yaw: f64| -> Result<f64> {
        let tr = run_greedy(agent, &z_run, RobotState::at([0.0, 0.0], yaw), &world, sim, weights, protocol.run_steps, |_| d)?;
        Ok(tr.iter().map(|s| wrap_angle(travel_heading(&s.state)).abs()).sum::<f64>() / tr.len().max(1) as f64)
    };
    let forward = run_error(0.0)?;
    let mut turning = 0.0;
    for &yaw in &protocol.turn_start_yaws {
        turning += run_error(yaw)? / protocol.turn_start_yaws.len() as f64;
    }
    let rest = RobotState::at([0.0, 0.0], 0.0);
    let z_dodge = latent(SkillClass::DodgeBackward)?;
    let tr = run_greedy(agent, &z_dodge, rest, &world, sim, weights, protocol.stationary_steps, |_| d)?;
    let end = tr.last().map_or([0.0, 0.0], |s| s.state.root_pos);
    let z_slash = latent(SkillClass::Slash)?;
    let tr = run_greedy(agent, &z_slash, rest, &world, sim, weights, protocol.stationary_steps, |_| d)?;
    let drift = tr
        .iter()
        .map(|s| s.state.root_pos[0].hypot(s.state.root_pos[1]))
        .fold(0.0, f64::max);
    Ok(AblationMetrics {
        run_heading_error: forward,
        turning_run_heading_error: turning,
        dodge_backward: -end[0],
        slash_drift: drift,
    })
}
