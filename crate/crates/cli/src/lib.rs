//! Command-line front end for `satlms`: every analysis as a reproducible run
//! writing CSV or JSON plus a JSON manifest.
//!
//! Exit codes: 0 success, 1 failed check or failed run, 2 usage or
//! validation error.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;

use args::{Cli, Command};

/// Bad flags, config entries or parameter values (exit code 2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Theory(a) => commands::theory(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Steady(a) => commands::steady(a),
        Command::Critical(a) => commands::critical(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::MomentsCheck(a) => commands::moments_check(a),
    }
}

/// True when output stopped because the reader went away (`| head`).
pub fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let invalid = matches!(
        err.downcast_ref::<satlms::Error>(),
        Some(satlms::Error::InvalidParam { .. })
    );
    if invalid || err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}

/// Applies `SATLMS_THREADS` (unset or 0 = rayon default) to the global pool.
pub fn init_threads(var: Option<&str>) -> Result<(), UsageError> {
    let Some(text) = var else { return Ok(()) };
    let n: usize = text
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("SATLMS_THREADS must be a non-negative integer, got `{text}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}
