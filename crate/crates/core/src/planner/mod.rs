//! Command sequencing: prompt construction, plan parsing, a rule-based
//! planner, and the executor that drives a policy through a plan.

mod backend;
mod execute;
mod scripted;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::motion::SkillClass;
use crate::sim::Scenario;
use crate::skill::{quantize_within, Codebook};
use crate::text::{encode_text, EncoderParams};

pub use backend::{
    parse_transcript, plan_with_retries, request_plan, ExternalConfig, HttpTransport, PlannerBackend, ReplayTransport,
    RetryOutcome, Transport,
};
pub use execute::{execute, Controller, EpisodeResult, Failure, PolicyController, TraceStep};
pub use scripted::scripted_plan;

/// Thresholds shared by the scripted planner and the executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Locomotion commands complete within this distance of the waypoint, m.
    pub completion_radius: f64,
    /// Stationary and fixed-direction commands run this long, s.
    pub command_duration: f64,
    /// A command that has not completed after this long fails the episode, s.
    pub command_timeout: f64,
    /// Distance short of the target at which the approach stops, m.
    pub vicinity: f64,
    /// Obstacle growth used when testing the direct route, m.
    pub planning_inflation: f64,
    /// Offset of detour waypoints beyond an obstacle side, m.
    pub detour_clearance: f64,
    /// Optional quantization distance guard for parsed captions.
    pub tau: Option<f64>,
    pub locomotion_caption: String,
    pub strike_caption: String,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            completion_radius: 0.3,
            command_duration: 2.0,
            command_timeout: 15.0,
            vicinity: 0.8,
            planning_inflation: 0.5,
            detour_clearance: 1.0,
            tau: None,
            locomotion_caption: "run forward".into(),
            strike_caption: "slash".into(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.completion_radius)
            && pos(self.command_duration)
            && pos(self.command_timeout)
            && pos(self.vicinity)
            && self.planning_inflation.is_finite()
            && self.planning_inflation >= 0.0
            && pos(self.detour_clearance))
        {
            return Err(Error::Config("planner thresholds must be finite and positive".into()));
        }
        if self.tau.is_some_and(|t| !pos(t)) {
            return Err(Error::Config("planner tau must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// World position to reach (locomotion) or face (stationary).
    Waypoint([f64; 2]),
    /// Fixed world unit direction.
    Direction([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Locomotion,
    Stationary,
}

impl CommandKind {
    pub fn of(skill: SkillClass) -> Self {
        if skill.is_locomotion() {
            CommandKind::Locomotion
        } else {
            CommandKind::Stationary
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub caption: String,
    pub target: Target,
    /// Skill class the caption quantizes to.
    pub skill: SkillClass,
    pub kind: CommandKind,
}

impl Command {
    pub fn new(caption: impl Into<String>, target: Target, skill: SkillClass) -> Self {
        Self {
            caption: caption.into(),
            target,
            skill,
            kind: CommandKind::of(skill),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub commands: Vec<Command>,
}

#[derive(Serialize)]
struct Record<'a> {
    skill: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    direction: Option<[f64; 2]>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// The structured-array form the prompt asks for.
    pub fn serialize(&self) -> String {
        let records: Vec<Record<'_>> = self
            .commands
            .iter()
            .map(|c| match c.target {
                Target::Waypoint(p) => Record {
                    skill: &c.caption,
                    target: Some(p),
                    direction: None,
                },
                Target::Direction(d) => Record {
                    skill: &c.caption,
                    target: None,
                    direction: Some(d),
                },
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("plain records serialize")
    }
}

fn parse_err(record: Option<usize>, message: impl Into<String>) -> Error {
    Error::PlanParse {
        record,
        message: message.into(),
    }
}

/// The first JSON array of objects embedded in `text`, scanning each `[`
/// in order; bracketed prose such as "[1]" is skipped.
fn first_array(text: &str) -> Option<Vec<Value>> {
    for (i, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if items.iter().all(Value::is_object) {
                return Some(items);
            }
        }
    }
    None
}

fn pair(v: &Value, index: usize, field: &str) -> Result<[f64; 2]> {
    let arr = v
        .as_array()
        .ok_or_else(|| parse_err(Some(index), format!("`{field}` must be an array of two numbers")))?;
    if arr.len() != 2 {
        return Err(parse_err(Some(index), format!("`{field}` has {} entries, expected 2", arr.len())));
    }
    let mut out = [0.0; 2];
    for (k, x) in arr.iter().enumerate() {
        out[k] = x
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| parse_err(Some(index), format!("`{field}` entry {k} is not a finite number")))?;
    }
    Ok(out)
}

/// Extracts the first structured array from a model reply and turns each
/// `{skill, target}` record into a command, classifying the caption by
/// quantizing its text feature.
pub fn parse_plan(text: &str, codebook: &Codebook, encoder: &EncoderParams, tau: Option<f64>) -> Result<Plan> {
    let items = first_array(text).ok_or_else(|| parse_err(None, "no structured array found in reply"))?;
    if items.is_empty() {
        return Err(parse_err(None, "plan array is empty"));
    }
    let mut commands = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| parse_err(Some(i), "record is not an object"))?;
        let caption = obj
            .get("skill")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(Some(i), "missing `skill` caption string"))?;
        let target = match (obj.get("target"), obj.get("direction")) {
            (Some(t), None) => Target::Waypoint(pair(t, i, "target")?),
            (None, Some(d)) => {
                let d = pair(d, i, "direction")?;
                let n = d[0].hypot(d[1]);
                if (n - 1.0).abs() > 1e-6 {
                    return Err(parse_err(Some(i), "`direction` must be a unit vector"));
                }
                Target::Direction(d)
            }
            (Some(_), Some(_)) => return Err(parse_err(Some(i), "give either `target` or `direction`, not both")),
            (None, None) => return Err(parse_err(Some(i), "missing `target`")),
        };
        let feature = encode_text(encoder, caption)?;
        let (k, _) = quantize_within(&feature, codebook, tau)?
            .ok_or_else(|| parse_err(Some(i), format!("caption {caption:?} is not close to any known skill")))?;
        let skill = codebook
            .skill(k)
            .ok_or_else(|| parse_err(Some(i), format!("codebook entry {k} is not a skill label")))?;
        commands.push(Command::new(caption, target, skill));
    }
    Ok(Plan { commands })
}

fn num(x: f64) -> String {
    let r = (x * 1000.0).round() / 1000.0;
    let s = format!("{r:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn point(p: [f64; 2]) -> String {
    format!("({}, {})", num(p[0]), num(p[1]))
}

/// Deterministic planning prompt with five sections: robot, scenario,
/// allowed skills, output schema, worked example.
pub fn build_prompt<S: AsRef<str>>(scenario: &Scenario, skill_captions: &[S], worked_example: &Plan) -> String {
    let mut p = String::new();
    p.push_str("## Robot\n");
    p.push_str(
        "You control a humanoid robot on a flat floor. It moves by executing one motion skill at a time. \
         Locomotion skills travel toward a target point and finish within 0.3 m of it. \
         Stationary skills are performed in place for a fixed time while facing their target. \
         A slash knocks down a target only when the robot is close to it.\n\n",
    );
    p.push_str("## Scenario\n");
    let _ = writeln!(p, "Robot start position: {}", point(scenario.start));
    let _ = writeln!(p, "Target position: {}", point(scenario.target));
    if scenario.obstacles.is_empty() {
        p.push_str("Obstacles: none\n");
    }
    for (i, o) in scenario.obstacles.iter().enumerate() {
        let _ = writeln!(
            p,
            "Obstacle {}: axis-aligned box at {}, half-extents {} by {} m",
            i + 1,
            point(o.center),
            num(o.half_extents[0]),
            num(o.half_extents[1])
        );
    }
    p.push_str("Task: reach the target without touching any obstacle, then knock it down.\n\n");
    p.push_str("## Skills\nUse only these captions for the `skill` field:\n");
    for c in skill_captions {
        let _ = writeln!(p, "- {}", c.as_ref());
    }
    p.push('\n');
    p.push_str("## Output format\n");
    p.push_str(
        "Reply with only a JSON array. Each element is an object {\"skill\": <caption>, \"target\": [x, y]} \
         where target is a world position in metres. Commands run in order. Do not add any other text.\n\n",
    );
    p.push_str("## Example\n");
    p.push_str(&worked_example.serialize());
    p.push('\n');
    p
}

#[cfg(test)]
mod tests;
