//! Command-line front end for the wavehits forecasting pipeline.

pub mod args;
mod commands;
pub mod overrides;
pub mod selfcheck;

use anyhow::{Context, Result};

pub use args::{Cli, Command};
pub use commands::{ordering_checks, OrderingCheck};

fn dispatch(cli: &Cli) -> Result<bool> {
    let text = match &cli.global.config {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?),
        None => None,
    };
    let mut overrides = cli.global.overrides.clone();
    if let Some(seed) = cli.global.seed {
        overrides.push(format!("train.seed={seed}"));
    }
    let config = overrides::load_config(text.as_deref(), &overrides)?;
    let ctx = commands::Ctx::new(config, &cli.global);
    match &cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Synth => commands::synth(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Evaluate(m) => commands::evaluate_cmd(&ctx, m),
        Command::Forecast(m) => commands::forecast_cmd(&ctx, m),
        Command::Ablate => commands::ablate(&ctx),
        Command::Selfcheck => commands::selfcheck_cmd(&ctx),
    }
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
