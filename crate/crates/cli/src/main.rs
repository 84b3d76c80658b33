use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use langskill::motion::SkillClass;
use langskill_cli::commands;
use langskill_cli::{exit_code, with_threads, Profile, RunConfig};

#[derive(Parser)]
#[command(name = "langskill", version, about = "Language-conditioned skill training and task planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with flat run-configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base profile: smoke or desk (default: the file's `profile`, else desk).
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override any configuration key, e.g. `--set lr_policy=2e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the motion dataset and caption corpus.
    GenData(Common),
    /// Fine-tune the caption encoder and fit the skill encoder.
    FinetuneEncoder(Common),
    /// Train a skill-conditioned policy.
    Train {
        #[command(flatten)]
        common: Common,
        /// Comma-separated skill subset, e.g. walk,run,slash.
        #[arg(long, value_delimiter = ',')]
        skills: Option<Vec<SkillClass>>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Continue from a policy checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Plan and execute the obstacle task over seeded episodes.
    EvalTask {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// scripted, external or replay.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Compare the three task-reward structures.
    AblateRewards {
        #[command(flatten)]
        common: Common,
        /// Existing checkpoints for root_plus_hips, root_only, movement_dir.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<PathBuf>>,
    },
    /// Held-out caption accuracy of the raw and fine-tuned encoders.
    EvalEncoder(Common),
    /// Print a plan for a scenario without executing it.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        backend: Option<String>,
        /// Canned transcript for the replay backend.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

fn resolve(c: &Common, extra: Vec<String>) -> langskill::Result<RunConfig> {
    let profile = c.profile.as_deref().map(Profile::parse).transpose()?;
    let mut overrides = c.overrides.clone();
    overrides.extend(extra);
    let mut cfg = RunConfig::resolve(c.config.as_deref(), profile, &overrides)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = &c.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn quoted(key: &str, v: &impl std::fmt::Display) -> String {
    format!("{key}=\"{v}\"")
}

fn run(cli: Cli) -> langskill::Result<()> {
    let (common, extra, task): (Common, Vec<String>, Box<dyn FnOnce(&RunConfig, &std::path::Path) -> langskill::Result<()> + Send>) =
        match cli.command {
            Command::GenData(c) => (c, vec![], Box::new(|cfg, out| commands::gen_data(cfg, out).map(drop))),
            Command::FinetuneEncoder(c) => (c, vec![], Box::new(|cfg, out| commands::finetune_encoder(cfg, out).map(drop))),
            Command::EvalEncoder(c) => (c, vec![], Box::new(|cfg, out| commands::eval_encoder(cfg, out).map(drop))),
            Command::Train {
                common,
                skills,
                iterations,
                resume,
            } => {
                let mut extra = Vec::new();
                if let Some(s) = skills {
                    let list: Vec<String> = s.iter().map(|s| format!("\"{}\"", s.id())).collect();
                    extra.push(format!("skills=[{}]", list.join(",")));
                }
                if let Some(n) = iterations {
                    extra.push(format!("iterations={n}"));
                }
                (common, extra, Box::new(move |cfg, out| commands::train(cfg, out, resume.as_deref()).map(drop)))
            }
            Command::EvalTask {
                common,
                scenario,
                backend,
                episodes,
            } => {
                let mut extra = Vec::new();
                if let Some(s) = scenario {
                    extra.push(quoted("scenario", &s.display()));
                }
                if let Some(b) = backend {
                    extra.push(quoted("backend", &b));
                }
                if let Some(n) = episodes {
                    extra.push(format!("episodes={n}"));
                }
                (common, extra, Box::new(|cfg, out| commands::eval_task(cfg, out).map(drop)))
            }
            Command::AblateRewards { common, checkpoints } => (
                common,
                vec![],
                Box::new(move |cfg, out| commands::ablate_rewards(cfg, out, checkpoints.as_deref()).map(drop)),
            ),
            Command::Plan {
                common,
                scenario,
                backend,
                transcript,
            } => {
                let mut extra = Vec::new();
                if let Some(s) = scenario {
                    extra.push(quoted("scenario", &s.display()));
                }
                if let Some(b) = backend {
                    extra.push(quoted("backend", &b));
                }
                if let Some(t) = transcript {
                    extra.push(quoted("transcript", &t.display()));
                }
                (common, extra, Box::new(|cfg, out| commands::plan(cfg, out).map(drop)))
            }
        };
    let cfg = resolve(&common, extra)?;
    let out = common.out.clone();
    with_threads(cfg.threads, move || task(&cfg, &out))?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
