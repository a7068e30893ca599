//! `lightpath`: simulate acquisitions, reconstruct transparent surfaces,
//! evaluate them and run the noise sweeps.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! stage produced nothing usable.

mod args;
mod config;
mod evaluate;
mod mesh;
mod reconstruct;
mod simulate;
mod sweep;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;

/// A stage finished but produced no usable result.
#[derive(Debug)]
pub struct EmptyResult(pub String);

impl std::fmt::Display for EmptyResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "empty result: {}", self.0)
    }
}

impl std::error::Error for EmptyResult {}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // messages are already key=value; only the level is prepended
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| writeln!(buf, "level={} {}", record.level().as_str().to_lowercase(), record.args()))
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            anyhow::bail!(lightpath::Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::run(a, &config),
        Command::Reconstruct(a) => reconstruct::run(a, &config),
        Command::Evaluate(a) => evaluate::run(a, &config),
        Command::Sweep(a) => sweep::run(a, &config),
        Command::Mesh(a) => mesh::run(a, &config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<EmptyResult>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
