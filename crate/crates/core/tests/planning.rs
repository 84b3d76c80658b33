use std::path::PathBuf;
use std::sync::OnceLock;

use langskill::motion::{generate_caption_corpus, SkillClass};
use langskill::pipeline::{build_skill_space, raw_encoder, SkillSpace, SkillSpaceConfig};
use langskill::planner::{
    parse_plan, plan_with_retries, scripted_plan, CommandKind, PlannerConfig, ReplayTransport, RetryOutcome, Target,
};
use langskill::sim::{Scenario, SimParams};
use langskill::Error;

fn space() -> &'static SkillSpace {
    static SPACE: OnceLock<SkillSpace> = OnceLock::new();
    SPACE.get_or_init(|| build_skill_space(&generate_caption_corpus(0), &SkillSpaceConfig::default(), 0).unwrap())
}

fn transcript(name: &str) -> ReplayTransport {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "transcripts", name].iter().collect();
    ReplayTransport::load(&path).unwrap()
}

fn replay(t: &mut ReplayTransport) -> langskill::Result<RetryOutcome> {
    let s = space();
    plan_with_retries(t, "prompt", 3, |r| parse_plan(r, &s.codebook, &s.encoder, None))
}

fn default_plan_targets() -> Vec<[f64; 2]> {
    vec![[3.0, 1.9], [5.2, 0.0], [6.0, 0.0]]
}

fn targets(o: &RetryOutcome) -> Vec<[f64; 2]> {
    o.plan
        .commands
        .iter()
        .map(|c| match c.target {
            Target::Waypoint(w) => w,
            Target::Direction(d) => d,
        })
        .collect()
}

#[test]
fn raw_encoder_matches_the_stage_zero_starting_point() {
    let corpus = generate_caption_corpus(0);
    let cfg = SkillSpaceConfig::default();
    assert_eq!(raw_encoder(&corpus, cfg.encoder, 0).unwrap(), space().raw_encoder);
}

#[test]
fn canned_transcripts_follow_the_retry_contract() {
    for name in ["valid.txt", "prose_wrapped.txt"] {
        let mut t = transcript(name);
        let out = replay(&mut t).unwrap();
        assert_eq!(out.retries, 0, "{name}");
        assert_eq!(t.calls, 1);
        assert_eq!(targets(&out), default_plan_targets());
        let skills: Vec<_> = out.plan.commands.iter().map(|c| c.skill).collect();
        assert_eq!(skills, [SkillClass::Run, SkillClass::Run, SkillClass::Slash]);
    }

    let mut t = transcript("malformed_then_valid.txt");
    let out = replay(&mut t).unwrap();
    assert_eq!(out.retries, 2);
    assert_eq!(t.calls, 3);
    assert_eq!(targets(&out), default_plan_targets());

    let mut t = transcript("always_malformed.txt");
    let err = replay(&mut t).unwrap_err();
    assert_eq!(t.calls, 4);
    assert!(matches!(err, Error::Planner(ref m) if m.contains("First run around the box")), "{err}");
}

#[test]
fn fine_tuned_encoder_grounds_plan_captions() {
    let s = space();
    let sim = SimParams::default();
    let cfg = PlannerConfig::default();
    let direct = Scenario::without_obstacles([0.0, 0.0], [6.0, 0.0]);
    let plan = scripted_plan(&direct, &cfg, &sim).unwrap();
    let parsed = parse_plan(&plan.serialize(), &s.codebook, &s.encoder, None).unwrap();
    assert_eq!(parsed, plan);
    let kinds: Vec<_> = parsed.commands.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, [CommandKind::Locomotion, CommandKind::Stationary]);
    assert_eq!(parsed.commands[0].skill, SkillClass::Run);

    let plan = scripted_plan(&Scenario::default(), &cfg, &sim).unwrap();
    assert_eq!(parse_plan(&plan.serialize(), &s.codebook, &s.encoder, None).unwrap(), plan);
}
