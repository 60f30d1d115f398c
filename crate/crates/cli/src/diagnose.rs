use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use combinfer_core::diagnostics::reports::{clustering_batches, exact_small_n, k_mean_curve, npp_exact, probe_report};
use combinfer_core::diagnostics::{exchangeability_monitor, geweke_test, ClusteringModel, CrpPriorModel, DEFAULT_ORDERINGS};
use combinfer_core::generative::{GenerativeSpec, PointSet};
use combinfer_core::ncp::NcpModel;
use combinfer_core::npp::NppModel;
use combinfer_core::Error;
use serde_json::{json, Value};

use crate::models::AnyModel;
use crate::ThresholdFailure;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Geweke,
    Exchangeability,
    ExactSmallN,
    ProbeLine,
    NppExact,
}

impl Which {
    fn name(self) -> &'static str {
        match self {
            Which::Geweke => "geweke",
            Which::Exchangeability => "exchangeability",
            Which::ExactSmallN => "exact-small-n",
            Which::ProbeLine => "probe-line",
            Which::NppExact => "npp-exact",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    /// Exact CRP prior predictive, ignoring the data.
    CrpPrior,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    which: Which,
    #[arg(long, required_unless_present = "reference")]
    checkpoint: Option<PathBuf>,
    /// Use a reference sampler instead of a checkpoint (geweke and exchangeability).
    #[arg(long)]
    reference: Option<Reference>,
    /// Generative model name; defaults to the checkpoint's training model.
    #[arg(long)]
    kind: Option<String>,
    /// JSON generative block or run config.
    #[arg(long, conflicts_with = "kind")]
    generative: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Dataset size (geweke 30, exact-small-n 5, npp-exact 6).
    #[arg(long)]
    n: Option<usize>,
    /// Model samples for geweke.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Held-out datasets (exchangeability 100 batches, oracles 50).
    #[arg(long)]
    datasets: Option<usize>,
    /// Exchangeability only: point sets per batch, all sharing one labeling.
    #[arg(long, default_value_t = 64)]
    replicas: usize,
    #[arg(long, default_value_t = DEFAULT_ORDERINGS)]
    orderings: usize,
    /// Geweke only: also emit the mean-K curve over N = 5, 10, ..., 50.
    #[arg(long)]
    curve: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `<which>.csv` and `<which>.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Upper bound on the headline statistic; exit 4 when exceeded. Geweke
    /// also accepts `noise-bound`.
    #[arg(long)]
    max: Option<String>,
}

enum Subject {
    Ncp(NcpModel),
    Npp(NppModel),
    Crp(CrpPriorModel),
}

struct Clustering<'a>(&'a Subject);

impl ClusteringModel<PointSet> for Clustering<'_> {
    fn log_prob(&self, data: &PointSet, labels: &combinfer_core::assignment::Assignment) -> combinfer_core::Result<f64> {
        match self.0 {
            Subject::Ncp(m) => m.log_prob(data, labels),
            Subject::Crp(m) => ClusteringModel::log_prob(m, data, labels),
            Subject::Npp(_) => unreachable!("checked before use"),
        }
    }

    fn sample(&self, data: &PointSet, rng: &mut combinfer_core::rng::StreamRng) -> combinfer_core::Result<combinfer_core::assignment::Assignment> {
        match self.0 {
            Subject::Ncp(m) => ClusteringModel::sample(m, data, rng),
            Subject::Crp(m) => ClusteringModel::sample(m, data, rng),
            Subject::Npp(_) => unreachable!("checked before use"),
        }
    }
}

fn incompatible(which: Which, what: &str) -> anyhow::Error {
    Error::Config(format!("{} cannot run on {what}", which.name())).into()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

pub fn run(args: DiagnoseArgs) -> Result<()> {
    let which = args.which;
    let (subject, recorded) = match (&args.checkpoint, args.reference) {
        (Some(p), None) => {
            let loaded = crate::models::load(p)?;
            let s = match loaded.model {
                AnyModel::Ncp(m) => Subject::Ncp(m),
                AnyModel::Npp(m) => Subject::Npp(m),
                other => return Err(incompatible(which, &format!("a {} checkpoint", other.task()))),
            };
            (s, loaded.generative)
        }
        (None, Some(Reference::CrpPrior)) => (Subject::Crp(CrpPriorModel { alpha: 0.0 }), None),
        _ => return Err(Error::Config("give exactly one of --checkpoint and --reference".into()).into()),
    };
    let spec = if args.kind.is_some() || args.generative.is_some() {
        crate::gen_data::generative_from(args.kind.as_deref(), args.generative.as_ref(), &args.overrides)?
    } else if let Some(g) = recorded {
        g
    } else {
        let kind = if matches!(subject, Subject::Npp(_)) { "noisy_pairs_2d" } else { "crp_gauss2d" };
        crate::gen_data::generative_from(Some(kind), None, &args.overrides)?
    };
    let subject = match subject {
        Subject::Crp(_) => match &spec {
            GenerativeSpec::CrpGauss2d(s) => Subject::Crp(CrpPriorModel { alpha: s.alpha }),
            _ => return Err(incompatible(which, "the CRP reference without a crp_gauss2d model")),
        },
        s => s,
    };
    let seed = crate::seed_override()?.unwrap_or(args.seed);
    crate::ensure_dir(&args.out)?;
    let csv_path = args.out.join(format!("{}.csv", which.name()));
    let json_path = args.out.join(format!("{}.json", which.name()));

    let needs_clustering = matches!(which, Which::Geweke | Which::Exchangeability);
    if needs_clustering && matches!(subject, Subject::Npp(_)) {
        return Err(incompatible(which, "a matching model"));
    }
    let (statistic, mut summary, noise_bound): (f64, Value, Option<f64>) = match which {
        Which::Geweke => {
            let model = Clustering(&subject);
            let n = args.n.unwrap_or(30);
            let rep = geweke_test(&model, &spec, n, args.samples, seed)?;
            let rows: Vec<Vec<String>> = rep
                .exact_k_dist
                .iter()
                .zip(&rep.estimated_k_hist)
                .enumerate()
                .map(|(i, (e, h))| vec![(i + 1).to_string(), f(*e), f(*h)])
                .collect();
            write_csv(&csv_path, &["k", "exact", "estimated"], &rows)?;
            let (mean, std) = rep.exact_mean_std();
            let mut s = json!({
                "n": n,
                "samples": rep.sample_count,
                "tv": rep.tv_distance,
                "noise_bound": rep.noise_bound(),
                "exact_mean_k": mean,
                "exact_std_k": std,
                "estimated_mean_k": rep.estimated_mean(),
            });
            if args.curve {
                let ns: Vec<usize> = (1..=10).map(|i| 5 * i).collect();
                let curve = k_mean_curve(&model, &spec, &ns, args.samples, seed)?;
                let rows: Vec<Vec<String>> = curve
                    .iter()
                    .map(|r| vec![r.n.to_string(), f(r.exact_mean), f(r.exact_std), f(r.estimated_mean), f(r.tv)])
                    .collect();
                write_csv(
                    &args.out.join("geweke-curve.csv"),
                    &["n", "exact_mean", "exact_std", "estimated_mean", "tv"],
                    &rows,
                )?;
                let within = curve.iter().all(|r| (r.estimated_mean - r.exact_mean).abs() <= r.exact_std);
                s["curve_within_one_std"] = json!(within);
            }
            (rep.tv_distance, s, Some(rep.noise_bound()))
        }
        Which::Exchangeability => {
            let model = Clustering(&subject);
            let count = args.datasets.unwrap_or(100);
            let data = clustering_batches(&spec, args.n, count, args.replicas, seed, "exchangeability")?;
            let rep = exchangeability_monitor(&model, &data, args.orderings, seed)?;
            let rows: Vec<Vec<String>> = rep
                .per_batch
                .iter()
                .enumerate()
                .map(|(b, s)| vec![b.to_string(), data[b].1.len().to_string(), f(s.mean_nll), f(s.std_nll), f(s.ratio)])
                .collect();
            write_csv(&csv_path, &["batch", "n", "mean_nll", "std_nll", "ratio"], &rows)?;
            let s = json!({ "orderings": rep.orderings, "batches": count, "replicas": args.replicas, "median_ratio": rep.median_ratio });
            (rep.median_ratio, s, None)
        }
        Which::ExactSmallN | Which::NppExact => {
            let count = args.datasets.unwrap_or(50);
            let rep = match (which, &subject) {
                (Which::ExactSmallN, Subject::Ncp(m)) => exact_small_n(m, &spec, args.n.unwrap_or(5), count, seed)?,
                (Which::NppExact, Subject::Npp(m)) => npp_exact(m, &spec, args.n.unwrap_or(6), count, seed)?,
                _ => return Err(incompatible(which, "this model")),
            };
            let rows: Vec<Vec<String>> = rep
                .tv
                .iter()
                .zip(&rep.kl)
                .enumerate()
                .map(|(d, (t, k))| vec![d.to_string(), f(*t), f(*k)])
                .collect();
            write_csv(&csv_path, &["dataset", "tv", "kl"], &rows)?;
            (rep.mean_tv, serde_json::to_value(&rep)?, None)
        }
        Which::ProbeLine => {
            let Subject::Ncp(m) = &subject else {
                return Err(incompatible(which, "this model"));
            };
            let rep = probe_report(m, &spec, seed)?;
            let opts = rep.max_abs_dev.len();
            let mut header = vec!["x".to_string()];
            header.extend((0..opts).map(|k| format!("exact_{k}")));
            header.extend((0..opts).map(|k| format!("model_{k}")));
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| std::iter::once(f(r.x)).chain(r.exact.iter().map(|v| f(*v))).chain(r.model.iter().map(|v| f(*v))).collect())
                .collect();
            let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            write_csv(&csv_path, &header, &rows)?;
            let worst = rep.max_abs_dev.iter().copied().fold(0.0, f64::max);
            (
                worst,
                json!({ "max_abs_dev": rep.max_abs_dev, "argmax_agreement": rep.argmax_agreement, "positions": rep.rows.len() }),
                None,
            )
        }
    };

    let threshold = match args.max.as_deref() {
        None => None,
        Some("noise-bound") => Some(noise_bound.ok_or_else(|| Error::Config("noise-bound only applies to geweke".into()))?),
        Some(v) => Some(v.parse::<f64>().map_err(|_| Error::Config(format!("--max {v:?} is not a number")))?),
    };
    let passed = threshold.map(|t| statistic <= t);
    summary["diagnostic"] = json!(which.name());
    summary["statistic"] = json!(statistic);
    summary["threshold"] = json!(threshold);
    summary["passed"] = json!(passed);
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    eprintln!("{}: statistic {statistic:.6}", which.name());
    match (passed, threshold) {
        (Some(false), Some(t)) => Err(ThresholdFailure(format!("{} statistic {statistic} exceeds {t}", which.name())).into()),
        _ => Ok(()),
    }
}
