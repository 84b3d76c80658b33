//! Directional task reward, discriminator reward and their weighted sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::RobotState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    RootOnly,
    MovementDir,
    RootPlusHips,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 3] = [RewardVariant::RootOnly, RewardVariant::MovementDir, RewardVariant::RootPlusHips];

    pub fn name(self) -> &'static str {
        match self {
            RewardVariant::RootOnly => "root_only",
            RewardVariant::MovementDir => "movement_dir",
            RewardVariant::RootPlusHips => "root_plus_hips",
        }
    }
}

impl std::str::FromStr for RewardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown reward variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w_task: f64,
    pub w_dis: f64,
    pub variant: RewardVariant,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 0.5,
            w2: 0.25,
            w_task: 0.5,
            w_dis: 0.5,
            variant: RewardVariant::RootPlusHips,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.w1, self.w2, self.w_task, self.w_dis];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("reward weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Largest attainable task reward for the active variant.
    pub fn max_task(&self) -> f64 {
        match self.variant {
            RewardVariant::RootPlusHips => self.w1 + 2.0 * self.w2,
            _ => self.w1,
        }
    }
}

pub fn heading_vec(yaw: f64) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c, s]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn task_reward(state: &RobotState, d_t: [f64; 2], w: &RewardWeights) -> Result<f64> {
    if ((d_t[0] * d_t[0] + d_t[1] * d_t[1]).sqrt() - 1.0).abs() > 1e-6 {
        return Err(Error::contract("command direction must be a unit vector"));
    }
    Ok(match w.variant {
        RewardVariant::RootPlusHips => {
            w.w1 * dot(heading_vec(state.root_yaw), d_t)
                + w.w2 * dot(heading_vec(state.root_yaw + state.hip_yaw_l()), d_t)
                + w.w2 * dot(heading_vec(state.root_yaw + state.hip_yaw_r()), d_t)
        }
        RewardVariant::RootOnly => w.w1 * dot(heading_vec(state.root_yaw), d_t),
        RewardVariant::MovementDir => {
            let speed = state.root_vel[0].hypot(state.root_vel[1]);
            if speed < 1e-6 {
                0.0
            } else {
                w.w1 * dot([state.root_vel[0] / speed, state.root_vel[1] / speed], d_t)
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiscConvention {
    /// `−log(1 − D + 1e-8)`: high when the transition looks like reference data.
    #[default]
    Standard,
    /// `log(1 − D)` taken literally.
    LogComplement,
}

/// Reward from a discriminator probability. The flag reports whether `d`
/// had to be clamped into `[1e-6, 1 − 1e-6]`.
pub fn disc_reward(d: f64, convention: DiscConvention) -> (f64, bool) {
    let lo = 1e-6;
    let hi = 1.0 - 1e-6;
    let clamped = !(d > 0.0 && d < 1.0);
    let d = if d.is_nan() { 0.5 } else { d.clamp(lo, hi) };
    let r = match convention {
        DiscConvention::Standard => -(1.0 - d + 1e-8).ln(),
        DiscConvention::LogComplement => (1.0 - d).ln(),
    };
    (r, clamped)
}

pub fn total_reward(r_task: f64, r_d: f64, w: &RewardWeights) -> f64 {
    w.w_task * r_task + w.w_dis * r_d
}
