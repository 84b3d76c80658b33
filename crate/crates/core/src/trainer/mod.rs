//! Skill-conditioned adversarial imitation: conditional discriminator,
//! Gaussian policy and value function trained with PPO on the combined
//! directional and style reward.

mod checkpoint;
mod disc;
mod eval;
mod nets;
mod ppo;
mod rollout;
mod train;

use rand::Rng;

use crate::error::{Error, Result};
use crate::motion::SkillClass;
use crate::rewards::{DiscConvention, RewardWeights};
use crate::sim::SimParams;
use crate::skill::{skill_encode, Codebook, SkillEncoderParams};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use disc::{disc_loss, DiscLoss};
pub use eval::{ablation_eval, heading_error, run_greedy, travel_heading, AblationMetrics, AblationProtocol, EvalStep};
pub use nets::{
    disc_input, disc_input_width, log_prob, policy_input, policy_input_width, scaled_features, Agent, Discriminator,
    PolicyNet, ValueNet, LOG_STD_FLOOR,
};
pub use ppo::{gae, ppo_update, surrogate_grad, PpoStats};
pub use rollout::{collect_rollouts, ReferenceBank, Record, RolloutBuffer, RolloutOptions};
pub use train::{train, IterationMetrics, Trainer};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub minibatch: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub lr_disc: f64,
    pub horizon: usize,
    pub n_envs: usize,
    pub gp_weight: f64,
    pub disc_updates_per_iter: usize,
    pub disc_minibatch: usize,
    pub total_iterations: usize,
    pub max_grad_norm: f64,
    pub kl_stop: f64,
    pub init_log_std: f64,
    /// Multiplier on the value network's output.
    pub value_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs_per_update: 4,
            minibatch: 256,
            lr_policy: 1e-4,
            lr_value: 1e-3,
            lr_disc: 3e-4,
            horizon: 128,
            n_envs: 16,
            gp_weight: 1.0,
            disc_updates_per_iter: 2,
            disc_minibatch: 256,
            total_iterations: 200,
            max_grad_norm: 1.0,
            kl_stop: 0.5,
            init_log_std: 0.1f64.ln(),
            value_scale: 20.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(Error::Config("gamma and gae_lambda must lie in [0, 1]".into()));
        }
        if !(self.clip_ratio > 0.0) {
            return Err(Error::Config("clip_ratio must be positive".into()));
        }
        if self.horizon == 0 || self.n_envs == 0 || self.minibatch == 0 || self.disc_minibatch == 0 {
            return Err(Error::Config("horizon, n_envs and batch sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            policy_hidden: vec![128, 128],
            value_hidden: vec![128, 128],
            disc_hidden: vec![128, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub nets: NetConfig,
    pub rewards: RewardWeights,
    pub disc_convention: DiscConvention,
    pub sim: SimParams,
    pub skills: Vec<SkillClass>,
    /// Command direction for every episode; random per episode when absent.
    pub fixed_direction: Option<[f64; 2]>,
    /// Probability that an episode starts from a random reference frame of
    /// its skill instead of the rest pose.
    pub reference_init_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            nets: NetConfig::default(),
            rewards: RewardWeights::default(),
            disc_convention: DiscConvention::Standard,
            sim: SimParams::default(),
            skills: SkillClass::ALL.to_vec(),
            fixed_direction: None,
            reference_init_prob: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.rewards.validate()?;
        if self.skills.is_empty() {
            return Err(Error::Config("at least one training skill is required".into()));
        }
        if !(0.0..=1.0).contains(&self.reference_init_prob) {
            return Err(Error::Config("reference_init_prob must lie in [0, 1]".into()));
        }
        if let Some(d) = self.fixed_direction {
            if ((d[0] * d[0] + d[1] * d[1]).sqrt() - 1.0).abs() > 1e-9 {
                return Err(Error::Config("fixed_direction must be a unit vector".into()));
            }
        }
        Ok(())
    }
}

/// Skill latents for the trained skill set, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillConditioning {
    pub skills: Vec<SkillClass>,
    pub latents: Vec<Vec<f64>>,
}

impl SkillConditioning {
    /// `z` of each skill is the skill encoder applied to the skill's code.
    pub fn new(codebook: &Codebook, encoder: &SkillEncoderParams, skills: &[SkillClass]) -> Result<Self> {
        let latents = skills
            .iter()
            .map(|&s| {
                let k = codebook.index_of_skill(s).ok_or_else(|| Error::UnknownSkill(s.label().into()))?;
                Ok(skill_encode(encoder, &codebook.entries[k])?.z)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            skills: skills.to_vec(),
            latents,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latents.first().map_or(0, |z| z.len())
    }

    pub fn slot(&self, skill: SkillClass) -> Option<usize> {
        self.skills.iter().position(|&s| s == skill)
    }

    pub fn latent(&self, skill: SkillClass) -> Option<&[f64]> {
        self.slot(skill).map(|i| self.latents[i].as_slice())
    }

    /// Uniform draw over the skill set.
    pub fn sample_skill<R: Rng + ?Sized>(&self, rng: &mut R) -> (SkillClass, &[f64]) {
        let i = rng.gen_range(0..self.skills.len());
        (self.skills[i], &self.latents[i])
    }
}

/// Well-mixed seed for an independent stream, from a master seed and two
/// stream coordinates (splitmix64 finalizer).
pub fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9).rotate_left(17));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cond() -> SkillConditioning {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let latents = (0..3)
            .map(|_| {
                let mut z: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                crate::numerics::normalize_in_place(&mut z);
                z
            })
            .collect();
        SkillConditioning {
            skills: vec![SkillClass::Walk, SkillClass::Run, SkillClass::Slash],
            latents,
        }
    }

    #[test]
    fn sample_skill_is_uniform_and_reproducible() {
        let c = cond();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let (s, z) = c.sample_skill(&mut rng);
            counts[c.slot(s).unwrap()] += 1;
            assert!((z.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
        }
        for n in counts {
            assert!((n as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.03);
        }
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = a.clone();
        assert_eq!(c.sample_skill(&mut a).0, c.sample_skill(&mut b).0);
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(1, 0, 0), stream_seed(1, 0, 1));
        assert_ne!(stream_seed(1, 1, 0), stream_seed(1, 0, 1));
        assert_eq!(stream_seed(7, 3, 4), stream_seed(7, 3, 4));
    }
}
