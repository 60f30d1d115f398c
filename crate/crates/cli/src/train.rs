use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use combinfer_core::checkpoint::Checkpoint;
use combinfer_core::io::{apply_override, LossCsvWriter, RunConfig, RunManifest, RunStatus, Task};
use combinfer_core::ncp::{self, NcpArch, NcpModel};
use combinfer_core::rng;
use combinfer_core::generative::GenerativeSpec;
use combinfer_core::nbp::{self, NbpArch, NbpModel};
use combinfer_core::npp::{self, NppArch, NppModel, PairDensity};
use combinfer_core::npt::{self, NptModel};
use combinfer_core::train::{Hook, TrainOptions, TrainingLog};

#[derive(Args)]
pub struct TrainArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. `training.iterations=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to paths.output_dir, then `.`).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn load_config(path: &PathBuf, overrides: &[String]) -> Result<RunConfig> {
    let mut value = RunConfig::load(path)?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut cfg = RunConfig::from_value(value)?;
    if let Some(seed) = crate::seed_override()? {
        cfg.training.seed = Some(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Outputs {
    checkpoint: PathBuf,
    loss: PathBuf,
    manifest: PathBuf,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    crate::ensure_dir(&dir)?;
    let out = Outputs {
        checkpoint: cfg.paths.checkpoint.clone().unwrap_or_else(|| dir.join("model.ckpt")),
        loss: dir.join("loss.csv"),
        manifest: dir.join("manifest.json"),
    };
    let seed = cfg.seed()?;
    let mut manifest = RunManifest::started(cfg.task.name(), cfg.hash(), seed);
    manifest.loss_log = Some(out.loss.clone());
    manifest.checkpoint = Some(out.checkpoint.clone());
    manifest.save(&out.manifest)?;

    let result = match cfg.task {
        Task::Ncp => train_ncp(&cfg, &out),
        Task::Npp => train_npp(&cfg, &out),
        Task::Nbp => train_nbp(&cfg, &out),
        Task::Npt => train_npt(&cfg, &out),
    };
    match result {
        Ok(log) => {
            manifest.finish(RunStatus::Completed, log.losses.len(), log.seconds);
            manifest.save(&out.manifest)?;
            eprintln!(
                "trained {} iterations in {:.1}s; checkpoint {}",
                log.losses.len(),
                log.seconds,
                out.checkpoint.display()
            );
            Ok(())
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.finished_unix = Some(combinfer_core::io::unix_now());
            manifest.save(&out.manifest)?;
            Err(e)
        }
    }
}

fn provenance(cfg: &RunConfig, mut c: Checkpoint) -> Checkpoint {
    c.config = serde_json::to_value(cfg).expect("config serializes");
    c
}

/// Runs `train` with loss logging, periodic checkpoints and progress lines.
fn fit<M>(
    cfg: &RunConfig,
    out: &Outputs,
    model: &mut M,
    to_checkpoint: fn(&M) -> Checkpoint,
    train: impl FnOnce(&mut M, &TrainOptions, Hook<'_, M>) -> combinfer_core::Result<TrainingLog>,
) -> Result<TrainingLog> {
    let opts = cfg.train_options()?;
    let mut losses = LossCsvWriter::create(&out.loss)?;
    let every = cfg.training.checkpoint_every;
    let total = opts.iterations;
    let mut hook = |it: usize, loss: f64, m: &M| -> combinfer_core::Result<()> {
        losses.push(it, loss)?;
        if every > 0 && it % every == 0 && it < total {
            provenance(cfg, to_checkpoint(m)).save(&out.checkpoint)?;
        }
        if it % 500 == 0 {
            eprintln!("iter {it}: loss {loss:.4}");
        }
        Ok(())
    };
    let log = train(model, &opts, &mut hook).context("training failed")?;
    losses.finish()?;
    provenance(cfg, to_checkpoint(model)).save(&out.checkpoint)?;
    Ok(log)
}

fn clustering_arch(cfg: &RunConfig) -> Result<NcpArch> {
    let a = cfg.resolved_architecture()?;
    Ok(NcpArch {
        d_x: 2,
        h: a.get("h").cloned(),
        q: a["q"].clone(),
        g: a["g"].clone(),
        f: a["f"].clone(),
    })
}

fn train_ncp(cfg: &RunConfig, out: &Outputs) -> Result<TrainingLog> {
    let arch = clustering_arch(cfg)?;
    let mut model = NcpModel::init(&arch, &mut rng::stream(cfg.seed()?, "init", 0))?;
    fit(cfg, out, &mut model, NcpModel::to_checkpoint, |m, opts, hook| {
        ncp::train(m, &cfg.generative, opts, Some(hook))
    })
}

fn train_npp(cfg: &RunConfig, out: &Outputs) -> Result<TrainingLog> {
    let GenerativeSpec::NoisyPairs2d(spec) = &cfg.generative else {
        unreachable!("validated config pairs npp with noisy_pairs_2d");
    };
    let a = cfg.resolved_architecture()?;
    let arch = NppArch { g: a["g"].clone(), r: a["R"].clone() };
    let density = PairDensity::gaussian(spec.prior_var, spec.noise_var)?;
    let mut model = NppModel::init(&arch, density, &mut rng::stream(cfg.seed()?, "init", 0))?;
    fit(cfg, out, &mut model, NppModel::to_checkpoint, |m, opts, hook| {
        npp::train_npp(m, &cfg.generative, opts, Some(hook))
    })
}

fn train_nbp(cfg: &RunConfig, out: &Outputs) -> Result<TrainingLog> {
    let a = cfg.resolved_architecture()?;
    let arch = NbpArch {
        t: a["t"].clone(),
        h: a["h"].clone(),
        q: a["q"].clone(),
        g: a["g"].clone(),
        f: a["f"].clone(),
    };
    let mut model = NbpModel::init(&arch, &mut rng::stream(cfg.seed()?, "init", 0))?;
    fit(cfg, out, &mut model, NbpModel::to_checkpoint, |m, opts, hook| {
        nbp::train_nbp(m, &cfg.generative, opts, Some(hook))
    })
}

fn train_npt(cfg: &RunConfig, out: &Outputs) -> Result<TrainingLog> {
    let arch = clustering_arch(cfg)?;
    let mut model = NptModel::init(&arch, npt::DEFAULT_INITIAL_DECAY, &mut rng::stream(cfg.seed()?, "init", 0))?;
    fit(cfg, out, &mut model, NptModel::to_checkpoint, |m, opts, hook| {
        let log = npt::train_npt(m, &cfg.generative, opts, Some(hook))?;
        eprintln!("learned decay b = {:.4}", m.decay());
        Ok(log)
    })
}
