use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use combinfer_core::io::DatasetFile;
use combinfer_core::Error;

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Which dataset in the file.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Number of iid samples.
    #[arg(long, default_value_t = 1, conflicts_with = "beam")]
    count: usize,
    /// Beam width; prints the beam in decreasing log-probability instead.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-lines output (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: SampleArgs) -> Result<()> {
    let loaded = crate::models::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let file = DatasetFile::load(&args.data)?;
    let ds = file.datasets.get(args.index).ok_or_else(|| {
        Error::Config(format!("{} holds {} datasets, index {} requested", args.data.display(), file.datasets.len(), args.index))
    })?;
    let seed = crate::seed_override()?.unwrap_or(args.seed);
    let lines = loaded.model.draw(ds, args.count, args.beam, seed)?;
    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    match &args.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
