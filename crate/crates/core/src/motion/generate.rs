//! Parametric waveform generators standing in for captured reference motion.
//!
//! Gait skills oscillate the two hip-swing joints in antiphase; the root
//! speed follows the instantaneous swing speed, scaled so its mean equals the
//! skill's nominal speed. Turning holds a hip-yaw split. Noise is added to
//! the knee, shoulder and elbow angles only, so hip motion stays exactly
//! reproducible by the simulator's locomotion proxy.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{joint, Frame, MotionClip, SkillClass, DT, JOINT_LIMIT, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::numerics::wrap_angle;

const JOINT_NOISE_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmPattern {
    /// Shoulders swing against the legs.
    CounterSwing { amp: f64, elbow: f64 },
    /// Right arm half-sine sweep repeated every `period` seconds.
    Sweep { amp: f64, period: f64 },
    /// Static posture.
    Hold { shoulder: [f64; 2], elbow: [f64; 2] },
}

/// Fixed waveform constants of one skill.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipSignature {
    /// Signed mean travel speed along the heading, m/s.
    pub speed: f64,
    pub swing_amp: f64,
    pub swing_freq: f64,
    pub yaw_rate: f64,
    pub hip_yaw: [f64; 2],
    pub knee_base: f64,
    pub knee_amp: f64,
    pub arms: ArmPattern,
}

impl ClipSignature {
    pub fn of(skill: SkillClass) -> Self {
        let still = ClipSignature {
            speed: 0.0,
            swing_amp: 0.0,
            swing_freq: 0.0,
            yaw_rate: 0.0,
            hip_yaw: [0.0; 2],
            knee_base: 0.2,
            knee_amp: 0.0,
            arms: ArmPattern::Hold {
                shoulder: [0.1, 0.1],
                elbow: [0.2, 0.2],
            },
        };
        match skill {
            SkillClass::Walk => ClipSignature {
                speed: 1.0,
                swing_amp: 0.3,
                swing_freq: 1.5,
                knee_base: 0.25,
                knee_amp: 0.2,
                arms: ArmPattern::CounterSwing { amp: 0.2, elbow: 0.3 },
                ..still
            },
            SkillClass::Run => ClipSignature {
                speed: 3.0,
                swing_amp: 0.5,
                swing_freq: 2.5,
                knee_base: 0.6,
                knee_amp: 0.4,
                arms: ArmPattern::CounterSwing { amp: 0.4, elbow: 0.9 },
                ..still
            },
            SkillClass::DodgeBackward => ClipSignature {
                speed: -1.5,
                swing_amp: 0.4,
                swing_freq: 1.6,
                knee_base: -0.6,
                knee_amp: 0.15,
                arms: ArmPattern::Hold {
                    shoulder: [0.6, 0.6],
                    elbow: [1.0, 1.0],
                },
                ..still
            },
            SkillClass::TurnLeft => ClipSignature {
                yaw_rate: 1.0,
                hip_yaw: [0.5, -0.5],
                ..still
            },
            SkillClass::TurnRight => ClipSignature {
                yaw_rate: -1.0,
                hip_yaw: [-0.5, 0.5],
                ..still
            },
            SkillClass::Slash => ClipSignature {
                knee_base: 0.3,
                arms: ArmPattern::Sweep { amp: 1.2, period: 1.0 },
                ..still
            },
            SkillClass::Shield => ClipSignature {
                knee_base: 0.3,
                arms: ArmPattern::Hold {
                    shoulder: [1.0, 0.2],
                    elbow: [1.2, 0.3],
                },
                ..still
            },
        }
    }

    /// Noise-free joint angles at time `t`.
    pub fn angles(&self, t: f64) -> [f64; NUM_JOINTS] {
        let mut q = [0.0; NUM_JOINTS];
        let phase = 2.0 * PI * self.swing_freq * t;
        let s = phase.sin();
        q[joint::HIP_YAW_L] = self.hip_yaw[0];
        q[joint::HIP_YAW_R] = self.hip_yaw[1];
        q[joint::HIP_SWING_L] = self.swing_amp * s;
        q[joint::HIP_SWING_R] = -self.swing_amp * s;
        q[joint::KNEE_L] = self.knee_base + self.knee_amp * s.max(0.0);
        q[joint::KNEE_R] = self.knee_base + self.knee_amp * (-s).max(0.0);
        match self.arms {
            ArmPattern::CounterSwing { amp, elbow } => {
                q[joint::SHOULDER_L] = -amp * s;
                q[joint::SHOULDER_R] = amp * s;
                q[joint::ELBOW_L] = elbow;
                q[joint::ELBOW_R] = elbow;
            }
            ArmPattern::Sweep { amp, period } => {
                let u = (t / period).rem_euclid(1.0);
                let sweep = (PI * u).sin();
                q[joint::SHOULDER_L] = 0.3;
                q[joint::ELBOW_L] = 0.5;
                q[joint::SHOULDER_R] = amp * sweep;
                q[joint::ELBOW_R] = 0.2 + 0.4 * sweep;
            }
            ArmPattern::Hold { shoulder, elbow } => {
                q[joint::SHOULDER_L] = shoulder[0];
                q[joint::SHOULDER_R] = shoulder[1];
                q[joint::ELBOW_L] = elbow[0];
                q[joint::ELBOW_R] = elbow[1];
            }
        }
        q
    }

    /// Mean absolute swing speed over a full cycle, rad/s.
    fn mean_swing_speed(&self) -> f64 {
        4.0 * self.swing_amp * self.swing_freq
    }
}

/// Deterministic clip of `skill` lasting `duration` seconds.
pub fn generate_clip(skill: SkillClass, duration: f64, seed: u64) -> Result<MotionClip> {
    if !(duration >= 1.0) {
        return Err(Error::contract(format!("clip duration {duration} s is below 1 s")));
    }
    let sig = ClipSignature::of(skill);
    let n = (duration / DT).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, JOINT_NOISE_STD).expect("valid std");

    let mut frames = Vec::with_capacity(n);
    let mut pos = [0.0f64; 2];
    for k in 0..n {
        let t = k as f64 * DT;
        let clean = sig.angles(t);
        let prev = sig.angles(t - DT);
        let mut joint_vel = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            joint_vel[j] = (clean[j] - prev[j]) / DT;
        }
        let mut joints = clean;
        for q in joints.iter_mut().skip(joint::KNEE_L) {
            *q = (*q + noise.sample(&mut rng)).clamp(-JOINT_LIMIT, JOINT_LIMIT);
        }

        let yaw = wrap_angle(sig.yaw_rate * t);
        let speed = if sig.swing_amp > 0.0 {
            let swing = 0.5 * (joint_vel[joint::HIP_SWING_L].abs() + joint_vel[joint::HIP_SWING_R].abs());
            sig.speed * swing / sig.mean_swing_speed()
        } else {
            sig.speed
        };
        let heading = yaw + 0.5 * (clean[joint::HIP_YAW_L] + clean[joint::HIP_YAW_R]);
        let root_vel = [speed * heading.cos(), speed * heading.sin()];
        if k > 0 {
            pos[0] += root_vel[0] * DT;
            pos[1] += root_vel[1] * DT;
        }
        frames.push(Frame {
            root_pos: pos,
            root_yaw: yaw,
            joints,
            joint_vel,
            root_vel,
        });
    }
    let captions = super::corpus::clip_captions(skill);
    Ok(MotionClip {
        skill,
        frames,
        captions,
    })
}
