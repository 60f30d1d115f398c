use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use combinfer_core::generative::GenerativeSpec;
use combinfer_core::io::{apply_override, DatasetFile, DatasetKind};
use combinfer_core::{rng, Error};

#[derive(Args)]
pub struct GenDataArgs {
    /// Generative model by name, with default hyperparameters.
    #[arg(long, conflicts_with = "config")]
    kind: Option<String>,
    /// JSON file holding a generative block or a whole run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a generative entry, e.g. `alpha=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Fixed dataset size instead of the model's size range.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn generative_from(kind: Option<&str>, config: Option<&PathBuf>, overrides: &[String]) -> Result<GenerativeSpec> {
    let mut value = match (kind, config) {
        (Some(k), None) => serde_json::json!({ "kind": k }),
        (None, Some(p)) => {
            let v = combinfer_core::io::RunConfig::load(p)?;
            v.get("generative").cloned().unwrap_or(v)
        }
        _ => return Err(Error::Config("give exactly one of --kind and --config".into()).into()),
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let spec: GenerativeSpec = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Dataset `i` is drawn from the stream `(seed, "gen-data", i)`.
pub fn run(args: GenDataArgs) -> Result<()> {
    let spec = generative_from(args.kind.as_deref(), args.config.as_ref(), &args.overrides)?;
    let seed = crate::seed_override()?.unwrap_or(args.seed);
    let datasets = (0..args.count)
        .map(|i| {
            let mut r = rng::stream(seed, "gen-data", i as u64);
            match args.n {
                Some(n) => spec.sample_with_size(n, &mut r),
                None => spec.sample(&mut r),
            }
        })
        .collect::<combinfer_core::Result<Vec<_>>>()?;
    DatasetFile::new(DatasetKind::for_generative(&spec), Some(spec), datasets)?.save(&args.out)?;
    Ok(())
}
