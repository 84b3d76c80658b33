use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::disc::disc_loss;
use super::nets::{disc_input_width, Agent, Discriminator, PolicyNet, ValueNet};
use super::ppo::{ppo_update, PpoStats};
use super::rollout::{collect_rollouts, ReferenceBank, RolloutBuffer, RolloutOptions};
use super::{stream_seed, SkillConditioning, TrainConfig};
use crate::error::{Error, Result};
use crate::motion::Dataset;
use crate::numerics::{clip_grad_norm, Matrix, OptimizerState};

/// One metrics line per training iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationMetrics {
    pub iteration: u64,
    pub disc_loss: f64,
    pub disc_penalty: f64,
    /// Accuracy on each update's batch before the update is applied.
    pub disc_accuracy: f64,
    pub mean_r_task: f64,
    pub mean_r_d: f64,
    pub mean_reward: f64,
    pub episode_return: f64,
    pub mean_speed: f64,
    pub mean_log_std: f64,
    pub disc_clamped: usize,
    #[serde(flatten)]
    pub ppo: PpoStats,
}

impl IterationMetrics {
    fn check(&self) -> Result<()> {
        let vals = [
            self.disc_loss,
            self.disc_penalty,
            self.disc_accuracy,
            self.mean_r_task,
            self.mean_r_d,
            self.mean_reward,
            self.episode_return,
            self.mean_log_std,
            self.ppo.policy_loss,
            self.ppo.value_loss,
            self.ppo.kl,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite metric at iteration {}", self.iteration)));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub cond: SkillConditioning,
    pub refs: ReferenceBank,
    pub agent: Agent,
    /// Iterations completed so far.
    pub iteration: u64,
    pub seed: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, dataset: &Dataset, cond: SkillConditioning, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX, 0));
        let dim = cond.latent_dim();
        let policy = PolicyNet::init(dim, &cfg.nets.policy_hidden, cfg.ppo.init_log_std, &mut rng)?;
        let value = ValueNet::init(dim, &cfg.nets.value_hidden, cfg.ppo.value_scale, &mut rng)?;
        let disc = Discriminator::init(dim, &cfg.nets.disc_hidden, &mut rng)?;
        let agent = Agent {
            opt_policy: OptimizerState::new(policy.param_len(), cfg.ppo.lr_policy),
            opt_value: OptimizerState::new(value.params.len(), cfg.ppo.lr_value),
            opt_disc: OptimizerState::new(disc.params.len(), cfg.ppo.lr_disc),
            policy,
            value,
            disc,
        };
        Self::resume(cfg, dataset, cond, agent, 0, seed)
    }

    /// Continues from saved networks; iteration numbering picks up at `iteration`.
    pub fn resume(cfg: TrainConfig, dataset: &Dataset, cond: SkillConditioning, agent: Agent, iteration: u64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cond.skills != cfg.skills {
            return Err(Error::Config("conditioning skills differ from the configured skill set".into()));
        }
        if agent.disc.spec.input_width() != disc_input_width(cond.latent_dim()) {
            return Err(Error::Config("network widths do not match the skill latent width".into()));
        }
        let refs = ReferenceBank::new(dataset, &cfg.skills)?;
        Ok(Self {
            cfg,
            cond,
            refs,
            agent,
            iteration,
            seed,
        })
    }

    fn disc_update<R: Rng + ?Sized>(&mut self, buffer: &RolloutBuffer, rng: &mut R) -> Result<(f64, f64, f64)> {
        let records: Vec<_> = buffer.records().collect();
        let b = self.cfg.ppo.disc_minibatch.min(records.len());
        let (mut loss, mut pen, mut acc) = (0.0, 0.0, 0.0);
        let k = self.cfg.ppo.disc_updates_per_iter;
        for _ in 0..k {
            let mut pol_rows = Vec::with_capacity(b);
            let mut ref_rows = Vec::with_capacity(b);
            for _ in 0..b {
                let r = records[rng.gen_range(0..records.len())];
                pol_rows.push(r.disc_input.clone());
                ref_rows.push(self.refs.sample_input(r.skill_slot, &self.cond.latents[r.skill_slot], rng));
            }
            let l = disc_loss(
                &self.agent.disc,
                &Matrix::from_rows(&ref_rows),
                &Matrix::from_rows(&pol_rows),
                self.cfg.ppo.gp_weight,
            )?;
            let mut g = l.grad.clone().into_inner();
            clip_grad_norm(&mut g, self.cfg.ppo.max_grad_norm);
            self.agent.opt_disc.step(&mut self.agent.disc.params, &g)?;
            loss += l.total() / k as f64;
            pen += l.penalty / k as f64;
            acc += l.accuracy / k as f64;
        }
        Ok((loss, pen, acc))
    }

    /// Collect, update the discriminator, update policy and value.
    pub fn iterate(&mut self) -> Result<IterationMetrics> {
        let it = self.iteration;
        let buffer = collect_rollouts(&self.agent, &self.cond, &self.refs, &self.cfg, self.seed, it, RolloutOptions::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, it, u64::MAX));
        let (disc_loss, disc_penalty, disc_accuracy) = if self.cfg.ppo.disc_updates_per_iter > 0 {
            self.disc_update(&buffer, &mut rng)?
        } else {
            (0.0, 0.0, 0.0)
        };
        let ppo = ppo_update(&mut self.agent, &buffer, &self.cfg.ppo, &mut rng)?;
        let n = buffer.len() as f64;
        let sum = |f: &dyn Fn(&super::Record) -> f64| buffer.records().map(f).sum::<f64>();
        let m = IterationMetrics {
            iteration: it,
            disc_loss,
            disc_penalty,
            disc_accuracy,
            mean_r_task: sum(&|r| r.r_task) / n,
            mean_r_d: sum(&|r| r.r_d) / n,
            mean_reward: sum(&|r| r.reward) / n,
            episode_return: sum(&|r| r.reward) / buffer.envs.len() as f64,
            mean_speed: sum(&|r| r.next_state.root_vel[0].hypot(r.next_state.root_vel[1])) / n,
            mean_log_std: self.agent.policy.log_std.iter().sum::<f64>() / self.agent.policy.log_std.len() as f64,
            disc_clamped: buffer.clamped,
            ppo,
        };
        m.check()?;
        self.iteration += 1;
        Ok(m)
    }

    pub fn run(&mut self, iterations: usize, mut sink: impl FnMut(&IterationMetrics) -> Result<()>) -> Result<()> {
        for _ in 0..iterations {
            let m = self.iterate()?;
            log::info!(
                "iter {} r_task {:.3} r_d {:.3} disc_acc {:.3} speed {:.2} kl {:.4}",
                m.iteration,
                m.mean_r_task,
                m.mean_r_d,
                m.disc_accuracy,
                m.mean_speed,
                m.ppo.kl
            );
            sink(&m)?;
        }
        Ok(())
    }
}

/// Fresh networks trained for `cfg.ppo.total_iterations`; each iteration's
/// metrics are passed to `sink`.
pub fn train(
    cfg: &TrainConfig,
    dataset: &Dataset,
    cond: SkillConditioning,
    seed: u64,
    sink: impl FnMut(&IterationMetrics) -> Result<()>,
) -> Result<Agent> {
    let mut t = Trainer::new(cfg.clone(), dataset, cond, seed)?;
    t.run(cfg.ppo.total_iterations, sink)?;
    Ok(t.agent)
}
