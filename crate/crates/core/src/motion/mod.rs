//! Labeled reference motion: skill classes, frames, synthetic clip
//! generators, transition sampling, the caption corpus and the dataset file.

mod corpus;
mod generate;
mod io;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{generate_caption_corpus, CaptionCorpus, CaptionEntry, Split};
pub use generate::{generate_clip, ClipSignature};
pub use io::{load_dataset, save_dataset};

/// Fixed frame period of reference clips and of the simulator.
pub const DT: f64 = 1.0 / 30.0;

/// Number of actuated joints.
pub const NUM_JOINTS: usize = 10;

/// Joint limit applied to every angle.
pub const JOINT_LIMIT: f64 = std::f64::consts::FRAC_PI_2;

/// Joint indices. Hip yaw sets the legs' heading relative to the root; hip
/// swing is the fore-aft leg swing that drives gait speed.
pub mod joint {
    pub const HIP_YAW_L: usize = 0;
    pub const HIP_YAW_R: usize = 1;
    pub const HIP_SWING_L: usize = 2;
    pub const HIP_SWING_R: usize = 3;
    pub const KNEE_L: usize = 4;
    pub const KNEE_R: usize = 5;
    pub const SHOULDER_L: usize = 6;
    pub const SHOULDER_R: usize = 7;
    pub const ELBOW_L: usize = 8;
    pub const ELBOW_R: usize = 9;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkillClass {
    Slash,
    Run,
    Walk,
    TurnLeft,
    TurnRight,
    DodgeBackward,
    Shield,
}

/// The six motion classes accuracy is reported over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseClass {
    Slash,
    Run,
    Walk,
    Turn,
    Dodge,
    Shield,
}

impl BaseClass {
    pub const ALL: [BaseClass; 6] = [
        BaseClass::Slash,
        BaseClass::Run,
        BaseClass::Walk,
        BaseClass::Turn,
        BaseClass::Dodge,
        BaseClass::Shield,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseClass::Slash => "slash",
            BaseClass::Run => "run",
            BaseClass::Walk => "walk",
            BaseClass::Turn => "turn",
            BaseClass::Dodge => "dodge",
            BaseClass::Shield => "shield",
        }
    }
}

impl SkillClass {
    pub const ALL: [SkillClass; 7] = [
        SkillClass::Slash,
        SkillClass::Run,
        SkillClass::Walk,
        SkillClass::TurnLeft,
        SkillClass::TurnRight,
        SkillClass::DodgeBackward,
        SkillClass::Shield,
    ];

    /// Canonical label text; these strings seed the codebook.
    pub fn label(self) -> &'static str {
        match self {
            SkillClass::Slash => "slash",
            SkillClass::Run => "run",
            SkillClass::Walk => "walk",
            SkillClass::TurnLeft => "turn left",
            SkillClass::TurnRight => "turn right",
            SkillClass::DodgeBackward => "dodge backward",
            SkillClass::Shield => "shield",
        }
    }

    /// Identifier form used in files and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            SkillClass::Slash => "slash",
            SkillClass::Run => "run",
            SkillClass::Walk => "walk",
            SkillClass::TurnLeft => "turn-left",
            SkillClass::TurnRight => "turn-right",
            SkillClass::DodgeBackward => "dodge-backward",
            SkillClass::Shield => "shield",
        }
    }

    pub fn base(self) -> BaseClass {
        match self {
            SkillClass::Slash => BaseClass::Slash,
            SkillClass::Run => BaseClass::Run,
            SkillClass::Walk => BaseClass::Walk,
            SkillClass::TurnLeft | SkillClass::TurnRight => BaseClass::Turn,
            SkillClass::DodgeBackward => BaseClass::Dodge,
            SkillClass::Shield => BaseClass::Shield,
        }
    }

    /// Whether commands of this class complete by reaching a position.
    pub fn is_locomotion(self) -> bool {
        matches!(self, SkillClass::Run | SkillClass::Walk | SkillClass::DodgeBackward)
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).expect("listed")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for SkillClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SkillClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let skill = match norm.as_str() {
            "slash" => SkillClass::Slash,
            "run" | "run-forward" => SkillClass::Run,
            "walk" | "walk-forward" => SkillClass::Walk,
            "turn-left" => SkillClass::TurnLeft,
            "turn-right" => SkillClass::TurnRight,
            "dodge" | "dodge-backward" => SkillClass::DodgeBackward,
            "shield" => SkillClass::Shield,
            _ => return Err(Error::UnknownSkill(s.to_string())),
        };
        Ok(skill)
    }
}

/// One sample of planar robot state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub root_pos: [f64; 2],
    pub root_yaw: f64,
    pub joints: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
    pub root_vel: [f64; 2],
}

impl Frame {
    pub fn rest() -> Self {
        Self {
            root_pos: [0.0; 2],
            root_yaw: 0.0,
            joints: [0.0; NUM_JOINTS],
            joint_vel: [0.0; NUM_JOINTS],
            root_vel: [0.0; 2],
        }
    }

    pub fn hip_yaw_l(&self) -> f64 {
        self.joints[joint::HIP_YAW_L]
    }

    pub fn hip_yaw_r(&self) -> f64 {
        self.joints[joint::HIP_YAW_R]
    }

    /// Number of `f64` values in the serialized form.
    pub const SCALARS: usize = 2 + 1 + NUM_JOINTS + NUM_JOINTS + 2;

    fn check(&self) -> std::result::Result<(), String> {
        use std::f64::consts::PI;
        if !(self.root_yaw > -PI && self.root_yaw <= PI) {
            return Err(format!("root yaw {} outside (-pi, pi]", self.root_yaw));
        }
        if let Some(j) = self.joints.iter().position(|a| !(a.abs() <= JOINT_LIMIT)) {
            return Err(format!("joint {j} angle {} beyond limit", self.joints[j]));
        }
        let all_finite = self
            .joint_vel
            .iter()
            .chain(&self.root_vel)
            .chain(&self.root_pos)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err("non-finite velocity or position".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub skill: SkillClass,
    pub frames: Vec<Frame>,
    pub captions: Vec<String>,
}

impl MotionClip {
    /// Checks frame invariants and root-velocity / displacement consistency:
    /// `pos[k+1] - pos[k] = root_vel[k+1] · dt`.
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::contract("a clip needs at least two frames"));
        }
        if self.captions.is_empty() || self.captions.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::contract("a clip needs non-empty captions"));
        }
        for (k, f) in self.frames.iter().enumerate() {
            f.check().map_err(|m| Error::contract(format!("frame {k}: {m}")))?;
        }
        for (k, w) in self.frames.windows(2).enumerate() {
            for a in 0..2 {
                let disp = w[1].root_pos[a] - w[0].root_pos[a];
                if (disp - w[1].root_vel[a] * DT).abs() > 1e-6 {
                    return Err(Error::contract(format!(
                        "frame {}: displacement inconsistent with root velocity",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        (self.frames.len() - 1) as f64 * DT
    }
}

/// Immutable collection of labeled clips.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub clips: Vec<MotionClip>,
}

impl Dataset {
    pub fn new(clips: Vec<MotionClip>) -> Self {
        Self { clips }
    }

    /// Clips for every skill in `skills`, `clips_per_skill` seeds each.
    pub fn generate(skills: &[SkillClass], clips_per_skill: usize, duration: f64, seed: u64) -> Result<Self> {
        let mut clips = Vec::new();
        for &s in skills {
            for i in 0..clips_per_skill {
                let clip_seed = seed
                    .wrapping_mul(1_000_003)
                    .wrapping_add(s.index() as u64 * 10_007 + i as u64);
                clips.push(generate_clip(s, duration, clip_seed)?);
            }
        }
        Ok(Self { clips })
    }

    pub fn skills(&self) -> Vec<SkillClass> {
        let mut s: Vec<_> = self.clips.iter().map(|c| c.skill).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn transitions(&self, skill: SkillClass) -> TransitionIndex<'_> {
        let mut pairs = Vec::new();
        for (ci, clip) in self.clips.iter().enumerate() {
            if clip.skill == skill {
                pairs.extend((0..clip.frames.len() - 1).map(|fi| (ci, fi)));
            }
        }
        TransitionIndex { dataset: self, pairs }
    }
}

/// Every consecutive-frame pair of one skill, for uniform sampling.
#[derive(Debug, Clone)]
pub struct TransitionIndex<'a> {
    dataset: &'a Dataset,
    pairs: Vec<(usize, usize)>,
}

impl<'a> TransitionIndex<'a> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Clip index and frame index of the `i`-th pair's first frame.
    pub fn location(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    pub fn get(&self, i: usize) -> (&'a Frame, &'a Frame) {
        let (c, f) = self.pairs[i];
        let frames = &self.dataset.clips[c].frames;
        (&frames[f], &frames[f + 1])
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.pairs.len())
    }
}

/// Uniformly sampled consecutive-frame pairs from clips of `skill`.
pub fn sample_transitions<R: Rng + ?Sized>(
    dataset: &Dataset,
    skill: SkillClass,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Frame, Frame)>> {
    let index = dataset.transitions(skill);
    if index.is_empty() {
        return Err(Error::contract(format!("dataset has no transitions for skill {skill}")));
    }
    Ok((0..n)
        .map(|_| {
            let (a, b) = index.get(index.sample_index(rng));
            (*a, *b)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skill_parsing() {
        for s in SkillClass::ALL {
            assert_eq!(s.id().parse::<SkillClass>().unwrap(), s);
            assert_eq!(s.label().parse::<SkillClass>().unwrap(), s);
        }
        assert!(matches!("kick".parse::<SkillClass>(), Err(Error::UnknownSkill(_))));
    }

    #[test]
    fn six_base_classes() {
        let names: Vec<_> = BaseClass::ALL.iter().map(|b| b.name()).collect();
        assert_eq!(names, ["slash", "run", "walk", "turn", "dodge", "shield"]);
    }

    #[test]
    fn sampling_edge_cases() {
        let clip = generate_clip(SkillClass::Walk, 2.0, 3).unwrap();
        assert_eq!(clip.frames.len(), 61);
        let ds = Dataset::new(vec![clip.clone()]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_transitions(&ds, SkillClass::Walk, 0, &mut rng).unwrap().is_empty());
        for (a, b) in sample_transitions(&ds, SkillClass::Walk, 100, &mut rng).unwrap() {
            let k = clip.frames.iter().position(|f| *f == a).unwrap();
            assert_eq!(clip.frames[k + 1], b);
        }
        assert!(sample_transitions(&ds, SkillClass::Run, 1, &mut rng).is_err());
    }
}
