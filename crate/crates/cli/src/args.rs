use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wavehits", version, about = "Wind-direction nowcasting from U/V components and wavelet features")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Experiment config file (TOML). Built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.max_epochs=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Only print errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// Print per-epoch progress and extra detail.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse, grid and clean the station CSV named by `data.input`.
    Ingest,
    /// Train the configured variant and write the model container.
    Train,
    /// Write per-window direction and speed forecasts.
    Forecast(ModelArg),
    /// Score a trained model on the evaluation split.
    Evaluate(ModelArg),
    /// Train and evaluate every listed variant on shared data.
    Ablate,
    /// Write the synthetic regime as a station CSV.
    Synth,
    /// Run the built-in numerical checks.
    Selfcheck,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArg {
    /// Model container; defaults to `<out>/model.whts`.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verbosity {
    Quiet,
    Normal,
    Verbose,
}

impl GlobalArgs {
    pub fn verbosity(&self) -> Verbosity {
        if self.quiet {
            Verbosity::Quiet
        } else if self.verbose {
            Verbosity::Verbose
        } else {
            Verbosity::Normal
        }
    }
}
