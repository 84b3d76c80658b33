use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use langskill::motion::{generate_caption_corpus, load_dataset, save_dataset, BaseClass, CaptionCorpus, Dataset, SkillClass, Split};
use langskill::numerics::wrap_angle;
use langskill::pipeline::{build_skill_space, raw_encoder};
use langskill::planner::{
    build_prompt, execute, parse_plan, plan_with_retries, request_plan, scripted_plan, EpisodeResult, Failure,
    HttpTransport, Plan, PlannerBackend, PolicyController, ReplayTransport, RetryOutcome,
};
use langskill::rewards::RewardVariant;
use langskill::sim::{reset_perturbed, RobotState, Scenario, WorldState};
use langskill::skill::{build_skill_codebook, caption_accuracy, quantize, AccuracyReport, Codebook, SkillEncoderParams};
use langskill::text::{encode_text, EncoderParams};
use langskill::trainer::{
    ablation_eval, load_checkpoint, run_greedy, save_checkpoint, stream_seed, travel_heading, AblationMetrics,
    AblationProtocol, Agent, Checkpoint, SkillConditioning, Trainer,
};
use langskill::{Error, Result};

use crate::config::{BackendKind, RunConfig};

/// Caption checked by the encoder reports.
pub const PROBE_CAPTION: &str = "rush ahead rapidly";

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn corpus(cfg: &RunConfig) -> Result<CaptionCorpus> {
    match &cfg.corpus {
        Some(p) => CaptionCorpus::from_csv(&fs::read_to_string(p)?),
        None => Ok(generate_caption_corpus(cfg.seed)),
    }
}

fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(p) => load_dataset(p),
        None => Dataset::generate(&SkillClass::ALL, cfg.clips_per_skill, cfg.clip_duration, cfg.seed),
    }
}

fn require_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs `checkpoint` (or --checkpoint)".into()))?;
    load_checkpoint(path)
}

fn require_agent(ckpt: &Checkpoint) -> Result<&Agent> {
    ckpt.agent
        .as_ref()
        .ok_or_else(|| Error::Config("checkpoint holds no trained policy".into()))
}

fn scenario(cfg: &RunConfig) -> Result<Scenario> {
    let s = match &cfg.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    s.validate(cfg.robot_radius)?;
    Ok(s)
}

/// Encoder, codebook and skill encoder used for conditioning.
struct SkillSpaceParts {
    encoder: EncoderParams,
    codebook: Codebook,
    skill_encoder: SkillEncoderParams,
}

fn skill_space_parts(cfg: &RunConfig) -> Result<SkillSpaceParts> {
    if let Some(path) = &cfg.checkpoint {
        let c = load_checkpoint(path)?;
        return Ok(SkillSpaceParts {
            encoder: c.encoder,
            codebook: c.codebook,
            skill_encoder: c.skill_encoder,
        });
    }
    let space = build_skill_space(&corpus(cfg)?, &cfg.skill_space(), cfg.seed)?;
    Ok(SkillSpaceParts {
        encoder: space.encoder,
        codebook: space.codebook,
        skill_encoder: space.skill_encoder,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenDataReport {
    pub dataset_path: PathBuf,
    pub corpus_path: PathBuf,
    pub clips: usize,
    pub skills: Vec<SkillClass>,
    /// Train and test caption counts.
    pub corpus_sizes: [usize; 2],
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<GenDataReport> {
    create_dir(out)?;
    let ds = Dataset::generate(&SkillClass::ALL, cfg.clips_per_skill, cfg.clip_duration, cfg.seed)?;
    let corpus = generate_caption_corpus(cfg.seed);
    let dataset_path = out.join("dataset.bin");
    let corpus_path = out.join("corpus.csv");
    save_dataset(&ds, &dataset_path)?;
    write_file(&corpus_path, &corpus.to_csv())?;
    let sizes = [Split::Train, Split::Test].map(|s| corpus.split(s).count());
    println!(
        "wrote {} clips for {} skills to {}",
        ds.clips.len(),
        ds.skills().len(),
        dataset_path.display()
    );
    println!(
        "wrote {} captions (train {}, test {}) to {}",
        corpus.entries.len(),
        sizes[0],
        sizes[1],
        corpus_path.display()
    );
    Ok(GenDataReport {
        dataset_path,
        corpus_path,
        clips: ds.clips.len(),
        skills: ds.skills(),
        corpus_sizes: sizes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderReport {
    pub raw: AccuracyReport,
    pub tuned: AccuracyReport,
    /// Skill the probe caption quantizes to under the fine-tuned encoder.
    pub probe_skill: Option<SkillClass>,
    pub checkpoint: Option<PathBuf>,
}

impl EncoderReport {
    pub fn table(&self) -> String {
        let mut t = String::from("encoder    ");
        for c in BaseClass::ALL {
            let _ = write!(t, " {:>7}", c.name());
        }
        t.push_str("  overall\n");
        for (name, r) in [("fine-tuned", &self.tuned), ("raw", &self.raw)] {
            let _ = write!(t, "{name:<11}");
            for c in BaseClass::ALL {
                let _ = write!(t, " {:>6.2}%", 100.0 * r.accuracy(c).unwrap_or(0.0));
            }
            let _ = writeln!(t, "  {:>6.2}%", 100.0 * r.aggregate());
        }
        t
    }

    pub fn csv(&self) -> String {
        let mut t = String::from("encoder,class,correct,total,accuracy\n");
        for (name, r) in [("fine-tuned", &self.tuned), ("raw", &self.raw)] {
            for &(c, k, n) in &r.per_class {
                let _ = writeln!(t, "{name},{},{k},{n},{}", c.name(), k as f64 / n.max(1) as f64);
            }
        }
        t
    }
}

fn probe_skill(encoder: &EncoderParams, codebook: &Codebook) -> Result<Option<SkillClass>> {
    let (k, _) = quantize(&encode_text(encoder, PROBE_CAPTION)?, codebook)?;
    Ok(codebook.skill(k))
}

fn print_encoder_report(r: &EncoderReport) {
    print!("{}", r.table());
    println!(
        "\"{PROBE_CAPTION}\" -> {}",
        r.probe_skill.map_or("(unlabelled code)".to_string(), |s| s.label().to_string())
    );
}

/// Stage 0: fine-tune the caption encoder, build the codebook and fit the
/// skill encoder. Writes `skill_space.ckpt` plus accuracy and loss logs.
pub fn finetune_encoder(cfg: &RunConfig, out: &Path) -> Result<EncoderReport> {
    create_dir(out)?;
    let corpus = corpus(cfg)?;
    let space = build_skill_space(&corpus, &cfg.skill_space(), cfg.seed)?;
    let raw_cb = build_skill_codebook(&space.raw_encoder)?;
    let path = out.join("skill_space.ckpt");
    let report = EncoderReport {
        raw: caption_accuracy(&space.raw_encoder, &raw_cb, &corpus, Split::Test)?,
        tuned: caption_accuracy(&space.encoder, &space.codebook, &corpus, Split::Test)?,
        probe_skill: probe_skill(&space.encoder, &space.codebook)?,
        checkpoint: Some(path.clone()),
    };
    let ckpt = Checkpoint {
        config_echo: cfg.to_toml(),
        encoder: space.encoder,
        codebook: space.codebook,
        skill_encoder: space.skill_encoder,
        skills: Vec::new(),
        agent: None,
        iteration: 0,
    };
    save_checkpoint(&ckpt, &path)?;
    write_file(&out.join("encoder_accuracy.csv"), &report.csv())?;
    let mut log = String::from("epoch,mse,separation,min_prototype_distance\n");
    for e in &space.finetune_log.epochs {
        let _ = writeln!(log, "{},{},{},{}", e.epoch, e.mse, e.separation, e.min_prototype_distance);
    }
    write_file(&out.join("finetune_log.csv"), &log)?;
    let mut log = String::from("step,alignment,uniformity\n");
    for (i, l) in space.skill_log.iter().enumerate() {
        let u = l.uniformity.map(|u| u.to_string()).unwrap_or_default();
        let _ = writeln!(log, "{i},{},{u}", l.alignment);
    }
    write_file(&out.join("skill_encoder_log.csv"), &log)?;
    print_encoder_report(&report);
    println!("wrote {}", path.display());
    Ok(report)
}

/// Held-out accuracy of the raw and fine-tuned encoders. With a checkpoint
/// the fine-tuned side is read from it; otherwise stage 0 is rerun.
pub fn eval_encoder(cfg: &RunConfig, out: &Path) -> Result<EncoderReport> {
    create_dir(out)?;
    let corpus = corpus(cfg)?;
    let (tuned, codebook) = match &cfg.checkpoint {
        Some(p) => {
            let c = load_checkpoint(p)?;
            (c.encoder, c.codebook)
        }
        None => {
            let s = build_skill_space(&corpus, &cfg.skill_space(), cfg.seed)?;
            (s.encoder, s.codebook)
        }
    };
    let raw = raw_encoder(&corpus, cfg.skill_space().encoder, cfg.seed)?;
    let report = EncoderReport {
        raw: caption_accuracy(&raw, &build_skill_codebook(&raw)?, &corpus, Split::Test)?,
        tuned: caption_accuracy(&tuned, &codebook, &corpus, Split::Test)?,
        probe_skill: probe_skill(&tuned, &codebook)?,
        checkpoint: None,
    };
    write_file(&out.join("encoder_accuracy.csv"), &report.csv())?;
    print_encoder_report(&report);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    /// Iteration count stored in the checkpoint.
    pub iteration: u64,
}

/// Trains a policy on `cfg.skills`, appending one JSON line per iteration
/// to the metrics file. With `resume`, training continues from that
/// checkpoint's networks and iteration count for `cfg.iterations` more
/// iterations and the metrics file is appended to.
pub fn train(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<TrainReport> {
    create_dir(out)?;
    let ds = dataset(cfg)?;
    let (parts, skills, start) = match resume {
        Some(p) => {
            let c = load_checkpoint(p)?;
            let agent = require_agent(&c)?.clone();
            let parts = SkillSpaceParts {
                encoder: c.encoder,
                codebook: c.codebook,
                skill_encoder: c.skill_encoder,
            };
            (parts, c.skills, Some((agent, c.iteration)))
        }
        None => (skill_space_parts(cfg)?, cfg.skills.clone(), None),
    };
    let tc = cfg.train_config(&skills)?;
    let cond = SkillConditioning::new(&parts.codebook, &parts.skill_encoder, &skills)?;
    let mut trainer = match start {
        Some((agent, it)) => Trainer::resume(tc, &ds, cond, agent, it, cfg.seed)?,
        None => Trainer::new(tc, &ds, cond, cfg.seed)?,
    };
    let metrics = cfg.metrics.clone().unwrap_or_else(|| out.join("metrics.jsonl"));
    let file = if resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&metrics)?
    } else {
        File::create(&metrics)?
    };
    let mut w = BufWriter::new(file);
    trainer.run(cfg.iterations, |m| {
        writeln!(w, "{}", m.to_json_line())?;
        w.flush()?;
        Ok(())
    })?;
    let ckpt = Checkpoint {
        config_echo: cfg.to_toml(),
        encoder: parts.encoder,
        codebook: parts.codebook,
        skill_encoder: parts.skill_encoder,
        skills,
        agent: Some(trainer.agent),
        iteration: trainer.iteration,
    };
    let path = out.join("policy.ckpt");
    save_checkpoint(&ckpt, &path)?;
    println!(
        "trained to iteration {} on {}; wrote {} and {}",
        ckpt.iteration,
        ckpt.skills.iter().map(|s| s.id()).collect::<Vec<_>>().join(","),
        path.display(),
        metrics.display()
    );
    Ok(TrainReport {
        checkpoint: path,
        metrics,
        iteration: ckpt.iteration,
    })
}

/// Example plan shown in the prompt: an obstacle-free approach and strike.
fn worked_example(cfg: &RunConfig) -> Result<Plan> {
    scripted_plan(
        &Scenario::without_obstacles([0.0, 0.0], [0.0, 4.0]),
        &cfg.planner_config(),
        &cfg.sim(),
    )
}

fn prompt_captions(skills: &[SkillClass]) -> Vec<&'static str> {
    let mut caps: Vec<&str> = Vec::new();
    for s in skills {
        let c = if *s == SkillClass::Run { "run forward" } else { s.label() };
        if !caps.contains(&c) {
            caps.push(c);
        }
    }
    caps
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub prompt: String,
    pub outcome: RetryOutcome,
}

fn obtain_plan(cfg: &RunConfig, scenario: &Scenario, encoder: &EncoderParams, codebook: &Codebook, skills: &[SkillClass]) -> Result<PlanReport> {
    let pc = cfg.planner_config();
    let prompt = build_prompt(scenario, &prompt_captions(skills), &worked_example(cfg)?);
    let parse = |text: &str| parse_plan(text, codebook, encoder, pc.tau);
    let outcome = match cfg.backend {
        BackendKind::Scripted => {
            let raw = request_plan(&PlannerBackend::Scripted, &prompt, scenario, &pc, &cfg.sim())?;
            RetryOutcome {
                plan: parse(&raw)?,
                retries: 0,
                raw,
            }
        }
        BackendKind::External => {
            let mut t = HttpTransport::new(cfg.external())?;
            plan_with_retries(&mut t, &prompt, cfg.max_retries, parse)?
        }
        BackendKind::Replay => {
            let path = cfg
                .transcript
                .as_ref()
                .ok_or_else(|| Error::Config("the replay backend needs `transcript`".into()))?;
            let mut t = ReplayTransport::load(path)?;
            plan_with_retries(&mut t, &prompt, cfg.max_retries, parse)?
        }
    };
    Ok(PlanReport { prompt, outcome })
}

fn describe_plan(plan: &Plan) -> String {
    let mut s = String::new();
    for (i, c) in plan.commands.iter().enumerate() {
        let _ = writeln!(s, "  {}. {:<12} {:?} {:?} -> {:?}", i + 1, c.caption, c.skill, c.kind, c.target);
    }
    s
}

/// Builds the prompt, obtains a plan from the configured backend and
/// prints it without executing.
pub fn plan(cfg: &RunConfig, out: &Path) -> Result<PlanReport> {
    create_dir(out)?;
    let scenario = scenario(cfg)?;
    let parts = skill_space_parts(cfg)?;
    let skills = match &cfg.checkpoint {
        Some(p) => {
            let s = load_checkpoint(p)?.skills;
            if s.is_empty() {
                cfg.skills.clone()
            } else {
                s
            }
        }
        None => cfg.skills.clone(),
    };
    let report = obtain_plan(cfg, &scenario, &parts.encoder, &parts.codebook, &skills)?;
    write_file(&out.join("prompt.txt"), &report.prompt)?;
    write_file(&out.join("plan.json"), &report.outcome.plan.serialize())?;
    println!("{}", report.outcome.plan.serialize());
    print!("{}", describe_plan(&report.outcome.plan));
    if report.outcome.retries > 0 {
        println!("retries: {}", report.outcome.retries);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub success: bool,
    pub failure: Option<String>,
    pub steps: usize,
    pub sim_time: f64,
    pub collisions: usize,
    pub commands_executed: usize,
    /// Mean over all steps, degrees.
    pub mean_orientation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_collisions: f64,
    /// Collisions summed over successful episodes only.
    pub collisions_in_successes: usize,
    pub mean_orientation_error: f64,
    pub plan: String,
    pub per_episode: Vec<EpisodeSummary>,
}

fn failure_name(f: Failure) -> String {
    match f {
        Failure::MaxSteps => "max_steps".into(),
        Failure::CommandTimeout { command } => format!("timeout_command_{command}"),
        Failure::PlanExhausted => "plan_exhausted".into(),
    }
}

fn point(p: [f64; 2]) -> String {
    format!("({}, {})", p[0], p[1])
}

/// Plans once for the scenario, then executes the plan in `cfg.episodes`
/// episodes whose start pose is jittered per episode seed.
pub fn eval_task(cfg: &RunConfig, out: &Path) -> Result<TaskReport> {
    create_dir(out)?;
    let ckpt = require_checkpoint(cfg)?;
    let agent = require_agent(&ckpt)?;
    let cond = SkillConditioning::new(&ckpt.codebook, &ckpt.skill_encoder, &ckpt.skills)?;
    let scenario = scenario(cfg)?;
    let sim = cfg.sim();
    let pc = cfg.planner_config();

    println!("scenario: start {} target {}", point(scenario.start), point(scenario.target));
    for (i, o) in scenario.obstacles.iter().enumerate() {
        println!(
            "  obstacle {}: center {} half-extents {} x {}",
            i + 1,
            point(o.center),
            o.half_extents[0],
            o.half_extents[1]
        );
    }
    let planned = obtain_plan(cfg, &scenario, &ckpt.encoder, &ckpt.codebook, &ckpt.skills)?;
    let plan = planned.outcome.plan;
    if let Some(c) = plan.commands.iter().find(|c| cond.slot(c.skill).is_none()) {
        return Err(Error::UnknownSkill(format!("plan uses {} but the policy was trained without it", c.skill.label())));
    }
    print!("plan:\n{}", describe_plan(&plan));

    let results: Vec<(EpisodeResult, RobotState)> = (0..cfg.episodes)
        .into_par_iter()
        .map(|i| {
            let (init, world) = reset_perturbed(&scenario, &sim, stream_seed(cfg.seed, 0xe7a1, i as u64), cfg.pos_jitter, cfg.yaw_jitter)?;
            let mut ctl = PolicyController { agent, cond: &cond };
            Ok((execute(&plan, &mut ctl, init, world, &sim, &pc, cfg.max_steps)?, init))
        })
        .collect::<Result<_>>()?;

    let mut paths = BufWriter::new(File::create(out.join("paths.csv"))?);
    writeln!(paths, "episode,step,x,y")?;
    let mut per_episode = Vec::with_capacity(results.len());
    for (i, (r, _)) in results.iter().enumerate() {
        for (k, p) in r.path.iter().enumerate() {
            writeln!(paths, "{i},{k},{},{}", p[0], p[1])?;
        }
        let errs: Vec<f64> = r.orientation_errors.iter().flatten().copied().collect();
        per_episode.push(EpisodeSummary {
            episode: i,
            success: r.success,
            failure: r.failure.map(failure_name),
            steps: r.steps,
            sim_time: r.sim_time(sim.dt),
            collisions: r.collisions,
            commands_executed: r.commands_executed,
            mean_orientation_error: errs.iter().sum::<f64>().to_degrees() / errs.len().max(1) as f64,
        });
    }
    paths.flush()?;

    let n = per_episode.len() as f64;
    let report = TaskReport {
        episodes: per_episode.len(),
        success_rate: per_episode.iter().filter(|e| e.success).count() as f64 / n,
        mean_collisions: per_episode.iter().map(|e| e.collisions as f64).sum::<f64>() / n,
        collisions_in_successes: per_episode.iter().filter(|e| e.success).map(|e| e.collisions).sum(),
        mean_orientation_error: per_episode.iter().map(|e| e.mean_orientation_error).sum::<f64>() / n,
        plan: plan.serialize(),
        per_episode,
    };
    let mut csv = String::from("episode,success,failure,steps,sim_time,collisions,commands_executed,mean_orientation_error_deg\n");
    for e in &report.per_episode {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            e.episode,
            e.success,
            e.failure.as_deref().unwrap_or(""),
            e.steps,
            e.sim_time,
            e.collisions,
            e.commands_executed,
            e.mean_orientation_error
        );
    }
    write_file(&out.join("episodes.csv"), &csv)?;
    write_file(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    println!(
        "success rate {:.1}% over {} episodes, mean collisions {:.2}, mean orientation error {:.1} deg",
        100.0 * report.success_rate,
        report.episodes,
        report.mean_collisions,
        report.mean_orientation_error
    );
    Ok(report)
}

/// Variants compared by `ablate_rewards`, in table order.
pub const ABLATION_VARIANTS: [RewardVariant; 3] =
    [RewardVariant::RootPlusHips, RewardVariant::RootOnly, RewardVariant::MovementDir];

/// Minimum backward travel for a dodge to count, and the slash drift bounds.
pub const DODGE_MIN_BACKWARD: f64 = 0.5;
pub const SLASH_STILL: f64 = 0.2;
pub const SLASH_DRIFT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: RewardVariant,
    pub metrics: AblationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// root_plus_hips has the lower run travel-heading error than root_only.
    pub run_heading_ordering: bool,
    /// root_plus_hips dodges back at least 0.5 m; movement_dir does not.
    pub dodge_ordering: bool,
    /// root_plus_hips slash stays within 0.2 m; movement_dir drifts 0.5 m or more.
    pub slash_ordering: bool,
}

impl AblationReport {
    fn row(&self, v: RewardVariant) -> &AblationMetrics {
        &self.rows.iter().find(|r| r.variant == v).expect("all variants present").metrics
    }

    pub fn from_rows(rows: Vec<AblationRow>) -> Self {
        let mut r = Self {
            rows,
            run_heading_ordering: false,
            dodge_ordering: false,
            slash_ordering: false,
        };
        let full = *r.row(RewardVariant::RootPlusHips);
        let root = *r.row(RewardVariant::RootOnly);
        let mov = *r.row(RewardVariant::MovementDir);
        r.run_heading_ordering = full.run_heading_error < root.run_heading_error;
        r.dodge_ordering = full.dodge_backward >= DODGE_MIN_BACKWARD && mov.dodge_backward < DODGE_MIN_BACKWARD;
        r.slash_ordering = full.slash_drift < SLASH_STILL && mov.slash_drift >= SLASH_DRIFT;
        r
    }

    pub fn table(&self) -> String {
        let mut t = format!(
            "{:<16} {:>16} {:>22} {:>18} {:>16}\n",
            "variant", "run error (deg)", "turning run err (deg)", "dodge backward (m)", "slash drift (m)"
        );
        for r in &self.rows {
            let _ = writeln!(
                t,
                "{:<16} {:>16.2} {:>22.2} {:>18.3} {:>16.3}",
                r.variant.name(),
                r.metrics.run_heading_error.to_degrees(),
                r.metrics.turning_run_heading_error.to_degrees(),
                r.metrics.dodge_backward,
                r.metrics.slash_drift
            );
        }
        let mark = |b: bool| if b { "holds" } else { "does not hold" };
        let _ = writeln!(t, "run heading ordering: {}", mark(self.run_heading_ordering));
        let _ = writeln!(t, "dodge ordering: {}", mark(self.dodge_ordering));
        let _ = writeln!(t, "slash ordering: {}", mark(self.slash_ordering));
        t
    }
}

fn write_traces(w: &mut impl Write, variant: RewardVariant, agent: &Agent, cond: &SkillConditioning, cfg: &RunConfig) -> Result<()> {
    let protocol = AblationProtocol::default();
    let sim = cfg.sim();
    let weights = cfg.rewards();
    let world = WorldState::empty();
    let latent = |s: SkillClass| cond.latent(s).ok_or_else(|| Error::UnknownSkill(s.label().into()));
    let mut runs = Vec::new();
    runs.push(("run", 0.0, latent(SkillClass::Run)?, protocol.run_steps));
    for &yaw in &protocol.turn_start_yaws {
        runs.push(("turning_run", yaw, latent(SkillClass::Run)?, protocol.run_steps));
    }
    runs.push(("dodge", 0.0, latent(SkillClass::DodgeBackward)?, protocol.stationary_steps));
    runs.push(("slash", 0.0, latent(SkillClass::Slash)?, protocol.stationary_steps));
    for (case, yaw, z, steps) in runs {
        let tr = run_greedy(agent, z, RobotState::at([0.0, 0.0], yaw), &world, &sim, &weights, steps, |_| [1.0, 0.0])?;
        for (k, s) in tr.iter().enumerate() {
            writeln!(
                w,
                "{},{case},{},{k},{},{},{}",
                variant.name(),
                yaw.to_degrees(),
                s.state.root_pos[0],
                s.state.root_pos[1],
                wrap_angle(travel_heading(&s.state)).to_degrees()
            )?;
        }
    }
    Ok(())
}

/// Trains (or loads, when `checkpoints` is given in table order) one
/// policy per reward variant on `cfg.ablation_skills` and compares them
/// with d_t along +x.
pub fn ablate_rewards(cfg: &RunConfig, out: &Path, checkpoints: Option<&[PathBuf]>) -> Result<AblationReport> {
    create_dir(out)?;
    if let Some(c) = checkpoints {
        if c.len() != ABLATION_VARIANTS.len() {
            return Err(Error::Config(format!(
                "expected {} checkpoints (root_plus_hips, root_only, movement_dir), got {}",
                ABLATION_VARIANTS.len(),
                c.len()
            )));
        }
    }
    let mut rows = Vec::new();
    let mut traces = BufWriter::new(File::create(out.join("ablation_traces.csv"))?);
    writeln!(traces, "variant,case,start_yaw_deg,step,x,y,travel_heading_deg")?;
    for (i, &variant) in ABLATION_VARIANTS.iter().enumerate() {
        let mut vcfg = cfg.clone();
        vcfg.reward_variant = variant;
        let path = match checkpoints {
            Some(c) => c[i].clone(),
            None => {
                vcfg.skills = cfg.ablation_skills.clone();
                vcfg.metrics = Some(out.join(format!("metrics_{}.jsonl", variant.name())));
                let dir = out.join(variant.name());
                train(&vcfg, &dir, None)?.checkpoint
            }
        };
        let ckpt = load_checkpoint(&path)?;
        let agent = require_agent(&ckpt)?;
        let cond = SkillConditioning::new(&ckpt.codebook, &ckpt.skill_encoder, &ckpt.skills)?;
        let metrics = ablation_eval(
            agent,
            |s| {
                cond.latent(s)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::UnknownSkill(s.label().into()))
            },
            &vcfg.sim(),
            &vcfg.rewards(),
            &AblationProtocol::default(),
        )?;
        write_traces(&mut traces, variant, agent, &cond, &vcfg)?;
        rows.push(AblationRow { variant, metrics });
    }
    traces.flush()?;
    let report = AblationReport::from_rows(rows);
    let mut csv = String::from("variant,run_heading_error_deg,turning_run_heading_error_deg,dodge_backward_m,slash_drift_m\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.variant.name(),
            r.metrics.run_heading_error.to_degrees(),
            r.metrics.turning_run_heading_error.to_degrees(),
            r.metrics.dodge_backward,
            r.metrics.slash_drift
        );
    }
    write_file(&out.join("ablation.csv"), &csv)?;
    print!("{}", report.table());
    Ok(report)
}
