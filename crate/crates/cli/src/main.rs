use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use combinfer_core::Error;

mod diagnose;
mod gen_data;
mod models;
mod plot;
mod sample;
mod train;

#[derive(Parser)]
#[command(name = "combinfer", version, about = "Amortized posterior inference for clusterings, communities, matchings and tracks")]
struct Cli {
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON run config.
    Train(train::TrainArgs),
    /// Draw posterior samples or beam results for one dataset.
    Sample(sample::SampleArgs),
    /// Write synthetic datasets from a generative model.
    #[command(name = "gen-data")]
    GenData(gen_data::GenDataArgs),
    /// Run a diagnostic and write `<which>.csv` and `<which>.json`.
    Diagnose(diagnose::DiagnoseArgs),
    /// Render a report, loss or dataset CSV as SVG.
    Plot(plot::PlotArgs),
}

/// Raised by `diagnose` when a requested threshold is not met.
#[derive(Debug)]
pub struct ThresholdFailure(pub String);

impl std::fmt::Display for ThresholdFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "threshold not met: {}", self.0)
    }
}

impl std::error::Error for ThresholdFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ThresholdFailure>().is_some() {
        return 4;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Numerical { .. } | Error::Divergence { .. }) => 3,
        Some(Error::Config(_) | Error::Contract(_) | Error::Format(_) | Error::Guard { .. } | Error::Json(_) | Error::Csv(_)) => 2,
        _ => 1,
    }
}

pub fn seed_override() -> anyhow::Result<Option<u64>> {
    match std::env::var("COMBINFER_SEED") {
        Ok(s) => Ok(Some(s.trim().parse().map_err(|_| Error::Config(format!("COMBINFER_SEED={s:?} is not an integer")))?)),
        Err(_) => Ok(None),
    }
}

pub fn ensure_dir(dir: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Train(a) => train::run(a),
        Command::Sample(a) => sample::run(a),
        Command::GenData(a) => gen_data::run(a),
        Command::Diagnose(a) => diagnose::run(a),
        Command::Plot(a) => plot::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
