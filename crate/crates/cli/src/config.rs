//! Flat run configuration. Precedence, lowest first: the profile's
//! defaults, the config file, `--set key=value` flags, dedicated flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use langskill::motion::SkillClass;
use langskill::pipeline::SkillSpaceConfig;
use langskill::planner::{ExternalConfig, PlannerBackend, PlannerConfig};
use langskill::rewards::{DiscConvention, RewardVariant, RewardWeights};
use langskill::sim::SimParams;
use langskill::skill::SkillTrainConfig;
use langskill::text::{EncoderShape, FinetuneConfig};
use langskill::trainer::{NetConfig, PpoConfig, TrainConfig};
use langskill::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// A couple of iterations with tiny networks; finishes in seconds.
    Smoke,
    /// Single-machine budget used by the acceptance runs.
    Desk,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::Config(format!("unknown profile '{s}' (expected smoke or desk)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    External,
    /// Replies come from the canned transcript at `transcript`.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    /// Worker threads for rollouts; 0 uses every core.
    pub threads: usize,

    pub dataset: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Checkpoint read by eval commands and by `train` for its skill space.
    pub checkpoint: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    /// Defaults to `metrics.jsonl` under the output directory.
    pub metrics: Option<PathBuf>,
    pub transcript: Option<PathBuf>,

    pub clips_per_skill: usize,
    pub clip_duration: f64,

    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub feature_dim: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_margin: f64,
    pub separation_weight: f64,
    pub finetune_batch: Option<usize>,
    pub skill_hidden: usize,
    pub latent_dim: usize,
    pub skill_steps: usize,
    pub skill_batch: usize,
    pub skill_lr: f64,

    pub skills: Vec<SkillClass>,
    pub iterations: usize,
    pub n_envs: usize,
    pub horizon: usize,
    pub epochs_per_update: usize,
    pub minibatch: usize,
    pub disc_minibatch: usize,
    pub disc_updates: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub lr_disc: f64,
    pub gp_weight: f64,
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub max_grad_norm: f64,
    pub kl_stop: f64,
    pub init_log_std: f64,
    pub value_scale: f64,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub reference_init_prob: f64,
    pub fixed_direction: Option<[f64; 2]>,

    pub w1: f64,
    pub w2: f64,
    pub w_task: f64,
    pub w_dis: f64,
    pub reward_variant: RewardVariant,
    pub disc_convention: DiscConvention,

    pub tau_joint: f64,
    pub omega_max: f64,
    pub c_gait: f64,
    pub k_turn: f64,
    pub robot_radius: f64,
    pub backward_knee: f64,
    pub strike_radius: f64,

    pub episodes: usize,
    pub pos_jitter: f64,
    pub yaw_jitter: f64,
    pub max_steps: usize,
    pub ablation_skills: Vec<SkillClass>,

    pub backend: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub request_timeout: f64,
    pub max_retries: usize,
    pub response_pointer: String,
    pub api_key_env: Option<String>,
    pub completion_radius: f64,
    pub command_duration: f64,
    pub command_timeout: f64,
    pub vicinity: f64,
    pub planning_inflation: f64,
    pub detour_clearance: f64,
    pub tau: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let space = SkillSpaceConfig::default();
        let ppo = PpoConfig::default();
        let nets = NetConfig::default();
        let rewards = RewardWeights::default();
        let sim = SimParams::default();
        let plan = PlannerConfig::default();
        let ext = ExternalConfig::default();
        let train = TrainConfig::default();
        let mut cfg = Self {
            profile,
            seed: 0,
            threads: 0,
            dataset: None,
            corpus: None,
            checkpoint: None,
            scenario: None,
            metrics: None,
            transcript: None,
            clips_per_skill: 8,
            clip_duration: 4.0,
            embed_dim: space.encoder.embed_dim,
            encoder_hidden: space.encoder.hidden,
            feature_dim: space.encoder.feature_dim,
            finetune_epochs: space.finetune.epochs,
            finetune_lr: space.finetune.learning_rate,
            finetune_margin: space.finetune.margin,
            separation_weight: space.finetune.separation_weight,
            finetune_batch: space.finetune.batch_size,
            skill_hidden: space.skill_hidden,
            latent_dim: space.latent_dim,
            skill_steps: space.skill_train.steps,
            skill_batch: space.skill_train.batch_size,
            skill_lr: space.skill_train.learning_rate,
            skills: vec![SkillClass::Walk, SkillClass::Run, SkillClass::Slash],
            iterations: 1500,
            n_envs: ppo.n_envs,
            horizon: ppo.horizon,
            epochs_per_update: ppo.epochs_per_update,
            minibatch: ppo.minibatch,
            disc_minibatch: ppo.disc_minibatch,
            disc_updates: ppo.disc_updates_per_iter,
            lr_policy: ppo.lr_policy,
            lr_value: ppo.lr_value,
            lr_disc: ppo.lr_disc,
            gp_weight: ppo.gp_weight,
            clip_ratio: ppo.clip_ratio,
            gamma: ppo.gamma,
            gae_lambda: ppo.gae_lambda,
            max_grad_norm: ppo.max_grad_norm,
            kl_stop: ppo.kl_stop,
            init_log_std: ppo.init_log_std,
            value_scale: ppo.value_scale,
            policy_hidden: nets.policy_hidden,
            value_hidden: nets.value_hidden,
            disc_hidden: nets.disc_hidden,
            reference_init_prob: train.reference_init_prob,
            fixed_direction: train.fixed_direction,
            w1: rewards.w1,
            w2: rewards.w2,
            w_task: rewards.w_task,
            w_dis: rewards.w_dis,
            reward_variant: rewards.variant,
            disc_convention: train.disc_convention,
            tau_joint: sim.tau_joint,
            omega_max: sim.omega_max,
            c_gait: sim.c_gait,
            k_turn: sim.k_turn,
            robot_radius: sim.robot_radius,
            backward_knee: sim.backward_knee,
            strike_radius: sim.strike_radius,
            episodes: 50,
            pos_jitter: 0.1,
            yaw_jitter: 0.1,
            max_steps: 1500,
            ablation_skills: vec![SkillClass::Run, SkillClass::DodgeBackward, SkillClass::Slash],
            backend: BackendKind::Scripted,
            endpoint: ext.endpoint,
            model: ext.model,
            request_timeout: ext.timeout_s,
            max_retries: ext.max_retries,
            response_pointer: ext.response_pointer,
            api_key_env: ext.api_key_env,
            completion_radius: plan.completion_radius,
            command_duration: plan.command_duration,
            command_timeout: plan.command_timeout,
            vicinity: plan.vicinity,
            planning_inflation: plan.planning_inflation,
            detour_clearance: plan.detour_clearance,
            tau: plan.tau,
        };
        if profile == Profile::Smoke {
            cfg.clips_per_skill = 2;
            cfg.clip_duration = 2.0;
            cfg.finetune_epochs = 20;
            cfg.skill_steps = 30;
            cfg.iterations = 2;
            cfg.n_envs = 4;
            cfg.horizon = 16;
            cfg.minibatch = 32;
            cfg.disc_minibatch = 32;
            cfg.policy_hidden = vec![32];
            cfg.value_hidden = vec![32];
            cfg.disc_hidden = vec![32];
            cfg.episodes = 3;
            cfg.max_steps = 300;
        }
        cfg
    }

    /// Resolves the configuration from an optional file and `key=value`
    /// overrides. Values are TOML literals; bare words are read as strings.
    pub fn resolve(file: Option<&Path>, profile: Option<Profile>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for kv in overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let profile = match profile {
            Some(p) => p,
            None => match table.get("profile") {
                Some(toml::Value::String(s)) => Profile::parse(s)?,
                Some(_) => return Err(Error::Config("profile must be a string".into())),
                None => Profile::Desk,
            },
        };
        let mut merged = toml::Table::try_from(Self::for_profile(profile)).expect("config serializes");
        merged.extend(table);
        merged.insert("profile".into(), toml::Value::String(profile_name(profile).into()));
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config(&self.skills)?.validate()?;
        self.planner_config().validate()?;
        if self.clips_per_skill == 0 || !(self.clip_duration > 0.0) {
            return Err(Error::Config("clips_per_skill and clip_duration must be positive".into()));
        }
        if self.episodes == 0 || self.max_steps == 0 {
            return Err(Error::Config("episodes and max_steps must be positive".into()));
        }
        if self.pos_jitter < 0.0 || self.yaw_jitter < 0.0 {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn skill_space(&self) -> SkillSpaceConfig {
        SkillSpaceConfig {
            encoder: EncoderShape {
                embed_dim: self.embed_dim,
                hidden: self.encoder_hidden,
                feature_dim: self.feature_dim,
            },
            finetune: FinetuneConfig {
                epochs: self.finetune_epochs,
                learning_rate: self.finetune_lr,
                margin: self.finetune_margin,
                separation_weight: self.separation_weight,
                batch_size: self.finetune_batch,
            },
            skill_hidden: self.skill_hidden,
            latent_dim: self.latent_dim,
            skill_train: SkillTrainConfig {
                steps: self.skill_steps,
                batch_size: self.skill_batch,
                learning_rate: self.skill_lr,
            },
        }
    }

    pub fn sim(&self) -> SimParams {
        SimParams {
            tau_joint: self.tau_joint,
            omega_max: self.omega_max,
            c_gait: self.c_gait,
            k_turn: self.k_turn,
            robot_radius: self.robot_radius,
            backward_knee: self.backward_knee,
            strike_radius: self.strike_radius,
            ..SimParams::default()
        }
    }

    pub fn rewards(&self) -> RewardWeights {
        RewardWeights {
            w1: self.w1,
            w2: self.w2,
            w_task: self.w_task,
            w_dis: self.w_dis,
            variant: self.reward_variant,
        }
    }

    pub fn train_config(&self, skills: &[SkillClass]) -> Result<TrainConfig> {
        Ok(TrainConfig {
            ppo: PpoConfig {
                clip_ratio: self.clip_ratio,
                gamma: self.gamma,
                gae_lambda: self.gae_lambda,
                epochs_per_update: self.epochs_per_update,
                minibatch: self.minibatch,
                lr_policy: self.lr_policy,
                lr_value: self.lr_value,
                lr_disc: self.lr_disc,
                horizon: self.horizon,
                n_envs: self.n_envs,
                gp_weight: self.gp_weight,
                disc_updates_per_iter: self.disc_updates,
                disc_minibatch: self.disc_minibatch,
                total_iterations: self.iterations,
                max_grad_norm: self.max_grad_norm,
                kl_stop: self.kl_stop,
                init_log_std: self.init_log_std,
                value_scale: self.value_scale,
            },
            nets: NetConfig {
                policy_hidden: self.policy_hidden.clone(),
                value_hidden: self.value_hidden.clone(),
                disc_hidden: self.disc_hidden.clone(),
            },
            rewards: self.rewards(),
            disc_convention: self.disc_convention,
            sim: self.sim(),
            skills: skills.to_vec(),
            fixed_direction: self.fixed_direction,
            reference_init_prob: self.reference_init_prob,
        })
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            completion_radius: self.completion_radius,
            command_duration: self.command_duration,
            command_timeout: self.command_timeout,
            vicinity: self.vicinity,
            planning_inflation: self.planning_inflation,
            detour_clearance: self.detour_clearance,
            tau: self.tau,
            ..PlannerConfig::default()
        }
    }

    pub fn external(&self) -> ExternalConfig {
        ExternalConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            timeout_s: self.request_timeout,
            max_retries: self.max_retries,
            response_pointer: self.response_pointer.clone(),
            api_key_env: self.api_key_env.clone(),
        }
    }

    pub fn planner_backend(&self) -> PlannerBackend {
        match self.backend {
            BackendKind::External => PlannerBackend::External(self.external()),
            BackendKind::Scripted | BackendKind::Replay => PlannerBackend::Scripted,
        }
    }
}

fn profile_name(p: Profile) -> &'static str {
    match p {
        Profile::Smoke => "smoke",
        Profile::Desk => "desk",
    }
}

fn parse_value(v: &str) -> toml::Value {
    format!("x = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_round_trip_through_toml() {
        for p in [Profile::Smoke, Profile::Desk] {
            let cfg = RunConfig::for_profile(p);
            let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn file_values_and_overrides_layer_over_profile() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "profile = \"smoke\"\niterations = 7\nlr_policy = 2e-4\n").unwrap();
        let cfg = RunConfig::resolve(Some(&path), None, &["iterations=9".into(), "skills=[\"slash\"]".into()]).unwrap();
        assert_eq!(cfg.profile, Profile::Smoke);
        assert_eq!(cfg.iterations, 9);
        assert_eq!(cfg.lr_policy, 2e-4);
        assert_eq!(cfg.skills, vec![SkillClass::Slash]);
        assert_eq!(cfg.n_envs, RunConfig::for_profile(Profile::Smoke).n_envs);

        let cfg = RunConfig::resolve(Some(&path), Some(Profile::Desk), &[]).unwrap();
        assert_eq!(cfg.profile, Profile::Desk);
        assert_eq!(cfg.iterations, 7);
    }

    #[test]
    fn bare_words_are_strings() {
        let cfg = RunConfig::resolve(None, None, &["reward_variant=root_only".into(), "backend=replay".into()]).unwrap();
        assert_eq!(cfg.reward_variant, RewardVariant::RootOnly);
        assert_eq!(cfg.backend, BackendKind::Replay);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(RunConfig::resolve(None, None, &["learning_rate=1".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::resolve(None, None, &["gamma=2.0".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::resolve(None, None, &["noequals".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::resolve(None, None, &["profile=huge".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::resolve(None, None, &["fixed_direction=[1.0, 1.0]".into()]), Err(Error::Config(_))));
    }
}
