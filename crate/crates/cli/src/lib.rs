//! Command-line harness: configuration resolution and one function per
//! subcommand. The binary in `main.rs` is a thin clap front end.

pub mod commands;
pub mod config;

use langskill::Error;

pub use config::{BackendKind, Profile, RunConfig};

/// Process exit code for an error, grouped by category.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::Parse { .. } | Error::UnsupportedVersion { .. } => 4,
        Error::Planner(_) | Error::PlanParse { .. } => 5,
        Error::Numeric(_) | Error::NonFinite { .. } => 6,
        Error::Scenario(_) | Error::UnknownSkill(_) | Error::Contract(_) => 7,
    }
}

/// Runs `f` on a rayon pool with `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}
