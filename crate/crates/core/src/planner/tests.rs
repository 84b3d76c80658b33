use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::motion::joint;
use crate::numerics::wrap_angle;
use crate::sim::{reset, Action, Obstacle, RobotState, SimParams, WorldState};
use crate::skill::build_skill_codebook;
use crate::text::{EncoderParams, EncoderShape, Vocabulary};

fn raw_encoder() -> (EncoderParams, Codebook) {
    let corpus = crate::motion::generate_caption_corpus(0);
    let vocab = Vocabulary::build(&corpus);
    let enc = EncoderParams::init(vocab, EncoderShape::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let cb = build_skill_codebook(&enc).unwrap();
    (enc, cb)
}

fn sim() -> SimParams {
    SimParams::default()
}

fn label_plan() -> Plan {
    Plan {
        commands: vec![
            Command::new("run", Target::Waypoint([3.0, 1.5]), SkillClass::Run),
            Command::new("slash", Target::Waypoint([6.0, 0.0]), SkillClass::Slash),
        ],
    }
}

/// Steers with symmetric hip yaw and swings the hips on a clock while a
/// locomotion skill is active.
struct Steering;

impl Controller for Steering {
    fn act(&mut self, s: &RobotState, d_t: [f64; 2], skill: SkillClass) -> Result<Action> {
        let err = wrap_angle(d_t[1].atan2(d_t[0]) - s.root_yaw);
        let g = (1.5 * err).clamp(-0.6, 0.6);
        let mut t = [0.0; crate::motion::NUM_JOINTS];
        t[joint::HIP_YAW_L] = g;
        t[joint::HIP_YAW_R] = -g;
        if skill.is_locomotion() {
            let ph = (std::f64::consts::TAU * 1.5 * s.episode_time).sin();
            t[joint::HIP_SWING_L] = 0.4 * ph;
            t[joint::HIP_SWING_R] = -0.4 * ph;
        }
        Action::from_slice(&t)
    }
}

#[test]
fn prompt_lists_sections_captions_and_coordinates() {
    let captions = ["run forward", "walk slowly", "slash"];
    let scenario = Scenario::default();
    let p = build_prompt(&scenario, &captions, &label_plan());
    let heads: Vec<usize> = ["## Robot", "## Scenario", "## Skills", "## Output format", "## Example"]
        .iter()
        .map(|h| p.find(h).unwrap_or_else(|| panic!("missing {h}")))
        .collect();
    assert!(heads.windows(2).all(|w| w[0] < w[1]));
    for c in captions {
        assert!(p.contains(&format!("- {c}\n")));
    }
    assert!(p.contains("(3, 0)"));
    assert!(p.contains("(6, 0)"));
    assert_eq!(p, build_prompt(&scenario, &captions, &label_plan()));
}

#[test]
fn parse_reads_labelled_records_and_kinds() {
    let (enc, cb) = raw_encoder();
    let text = r#"[{"skill":"run","target":[3.0,1.5]}, {"skill":"slash","target":[6.0,0.0]}]"#;
    let plan = parse_plan(text, &cb, &enc, None).unwrap();
    assert_eq!(plan, label_plan());
    assert_eq!(plan.commands[0].kind, CommandKind::Locomotion);
    assert_eq!(plan.commands[1].kind, CommandKind::Stationary);
}

#[test]
fn parse_skips_prose_and_bracketed_words() {
    let (enc, cb) = raw_encoder();
    let text = "Sure [1]. Here is the plan:\n```json\n[{\"skill\":\"run\",\"target\":[3.0,1.5]},{\"skill\":\"slash\",\"target\":[6,0]}]\n```\nGood luck [done]";
    assert_eq!(parse_plan(text, &cb, &enc, None).unwrap(), label_plan());
}

fn record_of(e: Error) -> Option<usize> {
    match e {
        Error::PlanParse { record, .. } => record,
        other => panic!("expected a plan parse error, got {other}"),
    }
}

#[test]
fn parse_errors_name_the_record() {
    let (enc, cb) = raw_encoder();
    assert_eq!(record_of(parse_plan("", &cb, &enc, None).unwrap_err()), None);
    assert_eq!(record_of(parse_plan("no plan here", &cb, &enc, None).unwrap_err()), None);
    assert_eq!(record_of(parse_plan("[]", &cb, &enc, None).unwrap_err()), None);
    let arity = r#"[{"skill":"run","target":[1,2]},{"skill":"slash","target":[1,2,3]}]"#;
    assert_eq!(record_of(parse_plan(arity, &cb, &enc, None).unwrap_err()), Some(1));
    let text = r#"[{"skill":"run","target":["a",2]}]"#;
    assert_eq!(record_of(parse_plan(text, &cb, &enc, None).unwrap_err()), Some(0));
    let missing = r#"[{"skill":"run","target":[0,0]},{"skill":"run","target":[0,1]},{"target":[1,1]}]"#;
    assert_eq!(record_of(parse_plan(missing, &cb, &enc, None).unwrap_err()), Some(2));
    let no_target = r#"[{"skill":"run"}]"#;
    assert_eq!(record_of(parse_plan(no_target, &cb, &enc, None).unwrap_err()), Some(0));
}

#[test]
fn tau_guard_rejects_far_captions() {
    let (enc, cb) = raw_encoder();
    let text = r#"[{"skill":"run","target":[1,0]},{"skill":"hop sideways quickly","target":[1,0]}]"#;
    assert!(parse_plan(text, &cb, &enc, None).is_ok());
    assert_eq!(record_of(parse_plan(text, &cb, &enc, Some(1e-9)).unwrap_err()), Some(1));
}

#[test]
fn direction_records_round_trip() {
    let (enc, cb) = raw_encoder();
    let plan = Plan {
        commands: vec![Command::new("walk", Target::Direction([0.6, 0.8]), SkillClass::Walk)],
    };
    assert_eq!(parse_plan(&plan.serialize(), &cb, &enc, None).unwrap(), plan);
    let bad = r#"[{"skill":"walk","direction":[1,1]}]"#;
    assert_eq!(record_of(parse_plan(bad, &cb, &enc, None).unwrap_err()), Some(0));
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(
        cmds in prop::collection::vec((0usize..7, -50.0f64..50.0, -50.0f64..50.0, any::<bool>()), 1..8)
    ) {
        let (enc, cb) = raw_encoder();
        let commands = cmds
            .into_iter()
            .map(|(k, x, y, dir)| {
                let s = SkillClass::ALL[k];
                let target = if dir {
                    let a = x.atan2(y);
                    Target::Direction([a.cos(), a.sin()])
                } else {
                    Target::Waypoint([x, y])
                };
                Command::new(s.label(), target, s)
            })
            .collect();
        let plan = Plan { commands };
        prop_assert_eq!(parse_plan(&plan.serialize(), &cb, &enc, None).unwrap(), plan);
    }
}

fn waypoints(plan: &Plan) -> Vec<[f64; 2]> {
    plan.commands
        .iter()
        .filter_map(|c| match c.target {
            Target::Waypoint(p) if c.kind == CommandKind::Locomotion => Some(p),
            _ => None,
        })
        .collect()
}

#[test]
fn scripted_default_detours_above_the_obstacle() {
    let plan = scripted_plan(&Scenario::default(), &PlannerConfig::default(), &sim()).unwrap();
    assert_eq!(plan.len(), 3);
    let wps = waypoints(&plan);
    assert!((wps[0][0] - 3.0).abs() < 1e-12 && (wps[0][1] - 1.9).abs() < 1e-12);
    assert!((wps[1][0] - 5.2).abs() < 1e-12 && wps[1][1].abs() < 1e-12);
    assert_eq!(plan.commands[2].skill, SkillClass::Slash);
    assert_eq!(plan.commands[2].target, Target::Waypoint([6.0, 0.0]));
}

#[test]
fn scripted_mirrored_obstacle_still_prefers_positive_y() {
    let mut s = Scenario::default();
    s.obstacles[0].center = [3.0, 0.0];
    let a = scripted_plan(&s, &PlannerConfig::default(), &sim()).unwrap();
    assert!(waypoints(&a)[0][1] > 0.0);
    s.obstacles[0].center = [3.0, 0.3];
    let b = scripted_plan(&s, &PlannerConfig::default(), &sim()).unwrap();
    assert!(waypoints(&b)[0][1] < 0.0);
}

#[test]
fn scripted_direct_and_close_cases() {
    let cfg = PlannerConfig::default();
    let open = Scenario::without_obstacles([0.0, 0.0], [6.0, 0.0]);
    let plan = scripted_plan(&open, &cfg, &sim()).unwrap();
    assert_eq!(plan.len(), 2);
    assert_eq!(plan.commands[0].kind, CommandKind::Locomotion);
    assert_eq!(plan.commands[1].skill, SkillClass::Slash);
    let close = Scenario::without_obstacles([5.5, 0.0], [6.0, 0.0]);
    let plan = scripted_plan(&close, &cfg, &sim()).unwrap();
    assert_eq!(plan.len(), 1);
    assert_eq!(plan.commands[0].skill, SkillClass::Slash);
}

proptest! {
    #[test]
    fn scripted_waypoints_avoid_planning_inflation(
        ox in 1.0f64..5.0, oy in -2.0f64..2.0, hx in 0.1f64..1.2, hy in 0.1f64..1.2,
        tx in 4.0f64..9.0, ty in -3.0f64..3.0,
    ) {
        let cfg = PlannerConfig::default();
        let s = Scenario {
            start: [0.0, 0.0],
            start_yaw: None,
            target: [tx, ty],
            obstacles: vec![Obstacle { center: [ox, oy], half_extents: [hx, hy] }],
        };
        prop_assume!(s.validate(sim().robot_radius).is_ok());
        if let Ok(plan) = scripted_plan(&s, &cfg, &sim()) {
            for w in waypoints(&plan) {
                for o in &s.obstacles {
                    prop_assert!(!o.inflated(cfg.planning_inflation).contains(w));
                }
            }
        }
    }
}

#[test]
fn replay_retries_after_malformed_replies() {
    let (enc, cb) = raw_encoder();
    let good = r#"[{"skill":"run","target":[3.0,1.5]},{"skill":"slash","target":[6.0,0.0]}]"#;
    let mut t = ReplayTransport::new(vec!["nothing".into(), "[{\"skill\":\"run\"}]".into(), good.into()]).unwrap();
    let out = plan_with_retries(&mut t, "prompt", 3, |r| parse_plan(r, &cb, &enc, None)).unwrap();
    assert_eq!(out.retries, 2);
    assert_eq!(out.plan, label_plan());

    let mut t = ReplayTransport::new(vec!["still nothing".into()]).unwrap();
    let err = plan_with_retries(&mut t, "prompt", 3, |r| parse_plan(r, &cb, &enc, None)).unwrap_err();
    assert_eq!(t.calls, 4);
    assert!(matches!(err, Error::Planner(ref m) if m.contains("still nothing")));
}

#[test]
fn transcript_split_on_separator_lines() {
    let text = "first\nreply\n--- reply ---\nsecond\n--- reply ---\n\n";
    assert_eq!(parse_transcript(text), vec!["first\nreply\n".to_string(), "second\n".to_string()]);
}

#[test]
fn scripted_backend_returns_serialized_plan() {
    let s = Scenario::default();
    let cfg = PlannerConfig::default();
    let raw = request_plan(&PlannerBackend::Scripted, "", &s, &cfg, &sim()).unwrap();
    assert_eq!(raw, scripted_plan(&s, &cfg, &sim()).unwrap().serialize());
}

fn slash_world(target: [f64; 2]) -> WorldState {
    WorldState {
        obstacles: Vec::new(),
        target_pos: target,
        target_alive: true,
    }
}

#[test]
fn slash_only_plan_strikes_within_command_duration() {
    let plan = Plan {
        commands: vec![Command::new("slash", Target::Waypoint([6.0, 0.0]), SkillClass::Slash)],
    };
    let cfg = PlannerConfig::default();
    let res = execute(&plan, &mut Steering, RobotState::at([5.5, 0.0], 0.0), slash_world([6.0, 0.0]), &sim(), &cfg, 1000).unwrap();
    assert!(res.success);
    assert!(res.sim_time(sim().dt) <= cfg.command_duration + 1e-9);
}

#[test]
fn steering_controller_solves_default_scenario_and_trace_is_consistent() {
    let s = Scenario::default();
    let cfg = PlannerConfig::default();
    let plan = scripted_plan(&s, &cfg, &sim()).unwrap();
    let (init, world) = reset(&s, &sim()).unwrap();
    let res = execute(&plan, &mut Steering, init, world, &sim(), &cfg, 3000).unwrap();
    assert!(res.success, "{:?}", res.failure);
    assert_eq!(res.collisions, 0);
    assert_eq!(res.commands_executed, 3);
    assert_eq!(res.path.len(), res.steps + 1);
    let mut last_cmd = 0;
    for t in &res.trace {
        assert!(t.command >= last_cmd);
        last_cmd = t.command;
        let w = t.aim.unwrap();
        let d = [w[0] - t.root_pos[0], w[1] - t.root_pos[1]];
        let n = d[0].hypot(d[1]);
        assert_eq!(t.d_t, [d[0] / n, d[1] / n]);
    }
}

#[test]
fn waypoint_inside_obstacle_fails() {
    let s = Scenario::default();
    let plan = Plan {
        commands: vec![
            Command::new("run", Target::Waypoint([3.0, 0.0]), SkillClass::Run),
            Command::new("slash", Target::Waypoint([6.0, 0.0]), SkillClass::Slash),
        ],
    };
    let (init, world) = reset(&s, &sim()).unwrap();
    let res = execute(&plan, &mut Steering, init, world, &sim(), &PlannerConfig::default(), 3000).unwrap();
    assert!(!res.success);
    assert!(res.collisions >= 1 || matches!(res.failure, Some(Failure::CommandTimeout { command: 0 })));
}

#[test]
fn max_steps_is_never_exceeded() {
    let s = Scenario::default();
    let cfg = PlannerConfig::default();
    let plan = scripted_plan(&s, &cfg, &sim()).unwrap();
    let (init, world) = reset(&s, &sim()).unwrap();
    let res = execute(&plan, &mut Steering, init, world, &sim(), &cfg, 40).unwrap();
    assert_eq!(res.steps, 40);
    assert_eq!(res.failure, Some(Failure::MaxSteps));
}
