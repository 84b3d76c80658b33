use super::{CommandKind, Plan, PlannerConfig, Target};
use crate::error::{Error, Result};
use crate::motion::SkillClass;
use crate::numerics::wrap_angle;
use crate::sim::{step, strike_check, Action, RobotState, SimParams, WorldState};
use crate::trainer::{Agent, SkillConditioning};

/// Chooses the next action for a skill and a commanded direction.
pub trait Controller {
    fn act(&mut self, state: &RobotState, d_t: [f64; 2], skill: SkillClass) -> Result<Action>;
}

/// Greedy policy actions conditioned on the skill's latent.
pub struct PolicyController<'a> {
    pub agent: &'a Agent,
    pub cond: &'a SkillConditioning,
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, state: &RobotState, d_t: [f64; 2], skill: SkillClass) -> Result<Action> {
        let z = self
            .cond
            .latent(skill)
            .ok_or_else(|| Error::UnknownSkill(skill.label().into()))?;
        self.agent.act_greedy(state, d_t, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub command: usize,
    /// Pose the command direction was computed from, before the step.
    pub root_pos: [f64; 2],
    pub root_yaw: f64,
    pub d_t: [f64; 2],
    /// Waypoint the direction was computed from, if any.
    pub aim: Option<[f64; 2]>,
    pub orientation_error: f64,
    pub collided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    MaxSteps,
    CommandTimeout { command: usize },
    PlanExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub failure: Option<Failure>,
    pub commands_executed: usize,
    pub collisions: usize,
    /// Root positions, starting with the initial one.
    pub path: Vec<[f64; 2]>,
    /// Orientation error per step, grouped by command, radians.
    pub orientation_errors: Vec<Vec<f64>>,
    pub steps: usize,
    pub trace: Vec<TraceStep>,
}

impl EpisodeResult {
    pub fn sim_time(&self, dt: f64) -> f64 {
        self.steps as f64 * dt
    }
}

fn toward(from: [f64; 2], to: [f64; 2]) -> Option<[f64; 2]> {
    let d = [to[0] - from[0], to[1] - from[1]];
    let n = d[0].hypot(d[1]);
    (n > 0.0).then(|| [d[0] / n, d[1] / n])
}

/// Runs the plan open-loop: one command at a time, completion by distance
/// for locomotion toward a waypoint and by elapsed time otherwise. The
/// episode succeeds as soon as the target is knocked down.
pub fn execute(
    plan: &Plan,
    controller: &mut dyn Controller,
    init: RobotState,
    world: WorldState,
    sim: &SimParams,
    cfg: &PlannerConfig,
    max_steps: usize,
) -> Result<EpisodeResult> {
    if plan.is_empty() {
        return Err(Error::contract("cannot execute an empty plan"));
    }
    cfg.validate()?;
    let mut world = world;
    let mut state = init;
    let mut res = EpisodeResult {
        success: false,
        failure: None,
        commands_executed: 0,
        collisions: 0,
        path: vec![state.root_pos],
        orientation_errors: Vec::new(),
        steps: 0,
        trace: Vec::new(),
    };
    let duration_steps = (cfg.command_duration / sim.dt).round() as usize;
    let timeout_steps = (cfg.command_timeout / sim.dt).round() as usize;
    let mut d_t = [state.root_yaw.cos(), state.root_yaw.sin()];

    for (ci, cmd) in plan.commands.iter().enumerate() {
        res.orientation_errors.push(Vec::new());
        let by_distance = matches!((cmd.kind, cmd.target), (CommandKind::Locomotion, Target::Waypoint(_)));
        let mut elapsed = 0;
        loop {
            if by_distance {
                if let Target::Waypoint(w) = cmd.target {
                    let gap = (state.root_pos[0] - w[0]).hypot(state.root_pos[1] - w[1]);
                    if gap < cfg.completion_radius {
                        break;
                    }
                }
                if elapsed >= timeout_steps {
                    res.failure = Some(Failure::CommandTimeout { command: ci });
                    return Ok(res);
                }
            } else if elapsed >= duration_steps {
                break;
            }
            if res.steps >= max_steps {
                res.failure = Some(Failure::MaxSteps);
                return Ok(res);
            }
            let aim = match cmd.target {
                Target::Waypoint(w) => {
                    if let Some(d) = toward(state.root_pos, w) {
                        d_t = d;
                    }
                    Some(w)
                }
                Target::Direction(d) => {
                    d_t = d;
                    None
                }
            };
            let err = wrap_angle(d_t[1].atan2(d_t[0]) - state.root_yaw).abs();
            let action = controller.act(&state, d_t, cmd.skill)?;
            let (next, info) = step(&state, &action, &world, sim)?;
            res.trace.push(TraceStep {
                command: ci,
                root_pos: state.root_pos,
                root_yaw: state.root_yaw,
                d_t,
                aim,
                orientation_error: err,
                collided: info.collided,
            });
            world = strike_check(&next, &world, cmd.skill, sim);
            state = next;
            elapsed += 1;
            res.steps += 1;
            res.collisions += info.collided as usize;
            res.orientation_errors[ci].push(err);
            res.path.push(state.root_pos);
            if !world.target_alive {
                res.commands_executed = ci + 1;
                res.success = true;
                return Ok(res);
            }
        }
        res.commands_executed = ci + 1;
    }
    res.failure = Some(Failure::PlanExhausted);
    Ok(res)
}
