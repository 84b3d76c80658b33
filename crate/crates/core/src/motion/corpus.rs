//! Caption corpus: verb × direction × manner combinations from per-class
//! synonym banks, split into train and held-out captions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SkillClass;
use crate::error::{Error, Result};

/// Header line written at the top of exported corpus files.
pub const CORPUS_HEADER: &str =
    "# caption synonym banks are constructed for this project; they are not a published vocabulary";

/// Fraction of full (verb, direction, manner) captions held out for testing.
const TEST_FRACTION: f64 = 0.35;

struct Bank {
    verbs: &'static [&'static str],
    directions: &'static [&'static str],
    manners: &'static [&'static str],
}

fn bank(skill: SkillClass) -> Bank {
    match skill {
        SkillClass::Slash => Bank {
            verbs: &["slash", "swing", "cut", "strike", "chop", "slice", "hack"],
            directions: &["forward", "ahead", "downward", "in front"],
            manners: &["fiercely", "hard", "powerfully", "violently", "sharply", "aggressively"],
        },
        SkillClass::Run => Bank {
            verbs: &["run", "sprint", "dash", "rush", "race", "bolt", "hurry"],
            directions: &["forward", "ahead", "onward", "straight"],
            manners: &["rapidly", "quickly", "fast", "swiftly", "hastily", "speedily"],
        },
        SkillClass::Walk => Bank {
            verbs: &["walk", "stroll", "step", "march", "pace", "wander", "amble"],
            directions: &["forward", "ahead", "onward", "straight"],
            manners: &["slowly", "calmly", "steadily", "gently", "leisurely", "casually"],
        },
        SkillClass::TurnLeft => Bank {
            verbs: &["turn", "rotate", "spin", "pivot", "swivel", "twist"],
            directions: &["left", "leftward", "to the left", "counterclockwise", "anticlockwise"],
            manners: &["smoothly", "gradually", "carefully", "slightly", "briskly", "softly"],
        },
        SkillClass::TurnRight => Bank {
            verbs: &["turn", "rotate", "spin", "pivot", "swivel", "twist"],
            directions: &["right", "rightward", "to the right", "clockwise"],
            manners: &["smoothly", "gradually", "carefully", "slightly", "briskly", "softly"],
        },
        SkillClass::DodgeBackward => Bank {
            verbs: &["dodge", "evade", "duck", "retreat", "withdraw", "recoil", "leap"],
            directions: &["backward", "backwards", "back", "to the rear"],
            manners: &["nimbly", "agilely", "deftly", "lightly", "suddenly", "alertly"],
        },
        SkillClass::Shield => Bank {
            verbs: &["shield", "block", "guard", "defend", "parry", "protect", "cover"],
            directions: &["forward", "ahead", "in front", "upward"],
            manners: &["firmly", "stoutly", "solidly", "securely", "tightly", "bravely"],
        },
    }
}

/// Captions attached to a generated clip: the canonical label and the first
/// verb/direction pair of the class.
pub(crate) fn clip_captions(skill: SkillClass) -> Vec<String> {
    let b = bank(skill);
    vec![skill.label().to_string(), format!("{} {}", b.verbs[0], b.directions[0])]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionEntry {
    pub caption: String,
    pub label: SkillClass,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionCorpus {
    pub entries: Vec<CaptionEntry>,
}

impl CaptionCorpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &CaptionEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn train(&self) -> impl Iterator<Item = &CaptionEntry> {
        self.split(Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &CaptionEntry> {
        self.split(Split::Test)
    }

    pub fn lookup(&self, caption: &str) -> Option<&CaptionEntry> {
        self.entries.iter().find(|e| e.caption == caption)
    }

    /// Restricts the corpus to the given classes.
    pub fn restricted(&self, skills: &[SkillClass]) -> Self {
        Self {
            entries: self.entries.iter().filter(|e| skills.contains(&e.label)).cloned().collect(),
        }
    }

    /// Structural checks: disjoint splits, one label per caption, and at least
    /// `min_per_split` captions per class and split.
    pub fn validate(&self, min_per_split: usize) -> Result<()> {
        let mut seen: BTreeMap<&str, (SkillClass, Split)> = BTreeMap::new();
        for e in &self.entries {
            if let Some(&(label, split)) = seen.get(e.caption.as_str()) {
                if label != e.label {
                    return Err(Error::contract(format!("caption '{}' has two labels", e.caption)));
                }
                if split != e.split {
                    return Err(Error::contract(format!("caption '{}' is in both splits", e.caption)));
                }
            }
            seen.insert(&e.caption, (e.label, e.split));
        }
        let classes: Vec<SkillClass> = {
            let mut c: Vec<_> = self.entries.iter().map(|e| e.label).collect();
            c.sort();
            c.dedup();
            c
        };
        for class in classes {
            for split in [Split::Train, Split::Test] {
                let n = self.split(split).filter(|e| e.label == class).count();
                if n < min_per_split {
                    return Err(Error::contract(format!(
                        "class {class} has {n} {} captions (< {min_per_split})",
                        split.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// UTF-8 CSV with a comment header and a `caption,label,split` row format.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CORPUS_HEADER);
        out.push('\n');
        out.push_str("caption,label,split\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.caption, e.label.id(), e.split.name());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut saw_header = false;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != "caption,label,split" {
                    return Err(Error::parse(at, "missing caption,label,split header"));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(at, "expected three comma-separated fields"));
            }
            let label = fields[1].parse::<SkillClass>().map_err(|e| Error::parse(at, e.to_string()))?;
            let split = match fields[2] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::parse(at, format!("unknown split '{other}'"))),
            };
            entries.push(CaptionEntry {
                caption: fields[0].to_string(),
                label,
                split,
            });
        }
        Ok(Self { entries })
    }
}

/// Every class's verb/direction pairs go to the training split; full
/// verb/direction/manner captions are shuffled and split by string.
pub fn generate_caption_corpus(seed: u64) -> CaptionCorpus {
    let mut entries = Vec::new();
    for skill in SkillClass::ALL {
        let b = bank(skill);
        for v in b.verbs {
            for d in b.directions {
                entries.push(CaptionEntry {
                    caption: format!("{v} {d}"),
                    label: skill,
                    split: Split::Train,
                });
            }
        }
        let mut full: Vec<String> = Vec::new();
        for v in b.verbs {
            for d in b.directions {
                for m in b.manners {
                    full.push(format!("{v} {d} {m}"));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_u64.wrapping_mul(skill.index() as u64 + 1)));
        full.shuffle(&mut rng);
        let n_test = (full.len() as f64 * TEST_FRACTION).round() as usize;
        for (i, caption) in full.into_iter().enumerate() {
            let mut split = if i < n_test { Split::Test } else { Split::Train };
            // Anchor captions: a familiar command and a rephrased unseen one.
            if caption == "rush ahead rapidly" {
                split = Split::Test;
            }
            entries.push(CaptionEntry {
                caption,
                label: skill,
                split,
            });
        }
    }
    CaptionCorpus { entries }
}
