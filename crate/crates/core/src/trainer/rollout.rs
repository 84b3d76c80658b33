use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::nets::{disc_input, policy_input, scaled_features, Agent};
use super::{stream_seed, SkillConditioning, TrainConfig};
use crate::error::{Error, Result};
use crate::motion::{Dataset, Frame, SkillClass};
use crate::numerics::{sigmoid, wrap_angle, Matrix};
use crate::rewards::{disc_reward, task_reward, total_reward};
use crate::sim::{step, Action, RobotState, WorldState};

/// Reference transitions per trained skill, as scaled feature pairs, plus
/// the frames used for reference-state initialization.
#[derive(Debug, Clone)]
pub struct ReferenceBank {
    pairs: Vec<Vec<Vec<f64>>>,
    frames: Vec<Vec<Frame>>,
}

impl ReferenceBank {
    pub fn new(dataset: &Dataset, skills: &[SkillClass]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(skills.len());
        let mut frames = Vec::with_capacity(skills.len());
        for &s in skills {
            let idx = dataset.transitions(s);
            if idx.is_empty() {
                return Err(Error::contract(format!("dataset has no clips for skill {s}")));
            }
            let mut ps = Vec::with_capacity(idx.len());
            let mut fs = Vec::new();
            for i in 0..idx.len() {
                let (a, b) = idx.get(i);
                let mut v = scaled_features(a);
                v.extend(scaled_features(b));
                ps.push(v);
                fs.push(*a);
            }
            pairs.push(ps);
            frames.push(fs);
        }
        Ok(Self { pairs, frames })
    }

    /// A uniformly drawn reference transition of skill slot `slot`, with `z`
    /// appended.
    pub fn sample_input<R: Rng + ?Sized>(&self, slot: usize, z: &[f64], rng: &mut R) -> Vec<f64> {
        let mut v = self.pairs[slot].choose(rng).expect("non-empty").clone();
        v.extend_from_slice(z);
        v
    }

    pub fn sample_frame<R: Rng + ?Sized>(&self, slot: usize, rng: &mut R) -> Frame {
        *self.frames[slot].choose(rng).expect("non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub input: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub r_task: f64,
    pub r_d: f64,
    pub reward: f64,
    pub done: bool,
    pub disc_input: Vec<f64>,
    pub skill_slot: usize,
    /// World-frame command direction and the state reached by this step.
    pub d_t: [f64; 2],
    pub next_state: RobotState,
}

/// `envs[e][t]` is step `t` of environment `e`; `last_values[e]` bootstraps
/// the step after the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub envs: Vec<Vec<Record>>,
    pub last_values: Vec<f64>,
    /// Discriminator outputs outside (0, 1) that had to be clamped.
    pub clamped: usize,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.envs.iter().map(|e| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.envs.iter().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RolloutOptions {
    /// Act with the policy mean instead of sampling.
    pub greedy: bool,
    /// Start every episode from the rest pose facing +x.
    pub rest_start: bool,
}

struct EnvSlot {
    rng: ChaCha8Rng,
    state: RobotState,
    slot: usize,
    d_t: [f64; 2],
}

/// Steps `n_envs` environments for `horizon` steps each, one episode per
/// environment, recording rewards and discriminator inputs. The horizon is a
/// truncation: nothing terminates, and the last step bootstraps from the
/// value of the final state.
pub fn collect_rollouts(
    agent: &Agent,
    cond: &SkillConditioning,
    refs: &ReferenceBank,
    cfg: &TrainConfig,
    seed: u64,
    iteration: u64,
    opts: RolloutOptions,
) -> Result<RolloutBuffer> {
    let n = cfg.ppo.n_envs;
    let horizon = cfg.ppo.horizon;
    let world = WorldState::empty();
    let mut envs: Vec<EnvSlot> = (0..n)
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, iteration, e as u64));
            let slot = rng.gen_range(0..cond.skills.len());
            let d_t = match cfg.fixed_direction {
                Some(d) => d,
                None => {
                    let a: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                    [a.cos(), a.sin()]
                }
            };
            let state = if opts.rest_start {
                RobotState::at([0.0, 0.0], 0.0)
            } else {
                let yaw: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                if rng.gen::<f64>() < cfg.reference_init_prob {
                    let f = refs.sample_frame(slot, &mut rng);
                    let mut s = RobotState::from_frame(&f, 0.0);
                    s.root_pos = [0.0, 0.0];
                    let (sn, cs) = (yaw - f.root_yaw).sin_cos();
                    s.root_vel = [cs * f.root_vel[0] - sn * f.root_vel[1], sn * f.root_vel[0] + cs * f.root_vel[1]];
                    s.root_yaw = wrap_angle(yaw);
                    s
                } else {
                    RobotState::at([0.0, 0.0], yaw)
                }
            };
            EnvSlot { rng, state, slot, d_t }
        })
        .collect();

    let mut out: Vec<Vec<Record>> = (0..n).map(|_| Vec::with_capacity(horizon)).collect();
    for _ in 0..horizon {
        let inputs: Vec<Vec<f64>> = envs
            .iter()
            .map(|e| policy_input(&e.state, e.d_t, &cond.latents[e.slot]))
            .collect();
        let means = agent.policy.mean_batch(&Matrix::from_rows(&inputs))?;
        let policy = &agent.policy;
        let sim = &cfg.sim;
        let stepped: Vec<Result<(Vec<f64>, f64, RobotState)>> = envs
            .par_iter_mut()
            .enumerate()
            .map(|(e, env)| {
                let mean = means.row(e);
                let action = if opts.greedy { mean.to_vec() } else { policy.sample(mean, &mut env.rng) };
                let lp = policy.log_prob(mean, &action);
                let (next, _) = step(&env.state, &Action::from_slice(&action)?, &world, sim)?;
                Ok((action, lp, next))
            })
            .collect();
        for (e, (res, input)) in stepped.into_iter().zip(inputs).enumerate() {
            let (action, log_prob, next) = res?;
            let env = &mut envs[e];
            let z = &cond.latents[env.slot];
            let r_task = task_reward(&next, env.d_t, &cfg.rewards)?;
            out[e].push(Record {
                input,
                action,
                log_prob,
                value: 0.0,
                r_task,
                r_d: 0.0,
                reward: 0.0,
                done: false,
                disc_input: disc_input(&env.state.frame(), &next.frame(), z),
                skill_slot: env.slot,
                d_t: env.d_t,
                next_state: next,
            });
            env.state = next;
        }
    }

    let final_inputs: Vec<Vec<f64>> = envs
        .iter()
        .map(|e| policy_input(&e.state, e.d_t, &cond.latents[e.slot]))
        .collect();
    let last_values = agent.value.values(&Matrix::from_rows(&final_inputs))?;
    let all_inputs: Vec<&[f64]> = out.iter().flatten().map(|r| r.input.as_slice()).collect();
    let values = agent.value.values(&Matrix::from_rows(&all_inputs))?;
    let disc_rows: Vec<&[f64]> = out.iter().flatten().map(|r| r.disc_input.as_slice()).collect();
    let logits = agent.disc.logits(&Matrix::from_rows(&disc_rows))?;
    let mut clamped = 0;
    for (i, rec) in out.iter_mut().flatten().enumerate() {
        rec.value = values[i];
        let (r_d, c) = disc_reward(sigmoid(logits[i]), cfg.disc_convention);
        clamped += c as usize;
        rec.r_d = r_d;
        rec.reward = total_reward(rec.r_task, r_d, &cfg.rewards);
        if !rec.reward.is_finite() {
            return Err(Error::Numeric(format!("non-finite reward at record {i}")));
        }
    }
    Ok(RolloutBuffer {
        envs: out,
        last_values,
        clamped,
    })
}
