//! Diagnostic runs shared by the CLI and the acceptance suite.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    adjusted_rand_index, compare, enumerate_partitions, enumerate_permutations, exact_clustering_posterior, exact_matching_posterior,
    geweke_test, model_joint_over_support, probe_line, ClusteringModel, LabeledBatch, ProbeRow,
};
use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::generative::{GenerativeSpec, LabeledDataset, PointSet};
use crate::math::{mean_std, median};
use crate::nbp::NbpModel;
use crate::ncp::NcpModel;
use crate::npp::NppModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallNReport {
    pub n: usize,
    pub tv: Vec<f64>,
    pub kl: Vec<f64>,
    pub mean_tv: f64,
    pub median_tv: f64,
    /// Largest |Σ model probability − 1| over the datasets.
    pub max_mass_error: f64,
}

impl SmallNReport {
    pub fn from_rows(n: usize, rows: Vec<super::Distances>) -> Self {
        let tv: Vec<f64> = rows.iter().map(|d| d.tv).collect();
        SmallNReport {
            n,
            mean_tv: mean_std(&tv).0,
            median_tv: median(&tv),
            kl: rows.iter().map(|d| d.kl).collect(),
            max_mass_error: rows.iter().map(|d| (d.model_mass - 1.0).abs()).fold(0.0, f64::max),
            tv,
        }
    }
}

/// Labeled point sets of a fixed size; dataset `i` uses `(seed, tag, i)`.
pub fn clustering_datasets(spec: &GenerativeSpec, n: Option<usize>, count: usize, seed: u64, tag: &str) -> Result<Vec<(PointSet, Assignment)>> {
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, tag, i as u64);
            let ds = match n {
                Some(n) => spec.sample_with_size(n, &mut r)?,
                None => spec.sample(&mut r)?,
            };
            match ds {
                LabeledDataset::Clustering { points, truth: Some(t) } => Ok((points, t)),
                other => Err(Error::Config(format!("expected labeled point sets, got {}", other.kind_name()))),
            }
        })
        .collect()
}

/// Minibatches shaped like training ones: one size, one labeling and
/// `replicas` point sets drawn given it. Batch `i` uses `(seed, tag, i)`.
pub fn clustering_batches(
    spec: &GenerativeSpec,
    n: Option<usize>,
    count: usize,
    replicas: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<LabeledBatch>> {
    if replicas == 0 {
        return Err(Error::Config("a batch needs at least one point set".into()));
    }
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, tag, i as u64);
            let n = n.unwrap_or_else(|| spec.size_range().sample(&mut r));
            let labels = spec.sample_labels(n, &mut r)?;
            let sets = (0..replicas)
                .map(|_| match spec.sample_given_labels(&labels, &mut r)? {
                    LabeledDataset::Clustering { points, .. } => Ok(points),
                    other => Err(Error::Config(format!("expected labeled point sets, got {}", other.kind_name()))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((sets, labels))
        })
        .collect()
}

/// TV and KL between the model and the exact posterior over all partitions
/// for `count` fresh datasets of size `n`.
pub fn exact_small_n(model: &NcpModel, spec: &GenerativeSpec, n: usize, count: usize, seed: u64) -> Result<SmallNReport> {
    let data = clustering_datasets(spec, Some(n), count, seed, "small-n")?;
    let support = enumerate_partitions(n)?;
    let rows = data
        .par_iter()
        .map(|(points, _)| {
            let exact = exact_clustering_posterior(points, spec)?;
            let lp = model_joint_over_support(&model.posterior(points)?, &support)?;
            compare(&lp, &exact.log_probs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SmallNReport::from_rows(n, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KCurveRow {
    pub n: usize,
    pub exact_mean: f64,
    pub exact_std: f64,
    pub estimated_mean: f64,
    pub tv: f64,
}

/// Mean number of clusters under model sampling vs the exact prior, per N.
pub fn k_mean_curve<M: ClusteringModel<PointSet>>(model: &M, spec: &GenerativeSpec, ns: &[usize], samples: usize, seed: u64) -> Result<Vec<KCurveRow>> {
    ns.iter()
        .map(|&n| {
            let rep = geweke_test(model, spec, n, samples, rng::derive_seed(seed, "k-curve", n as u64))?;
            let (exact_mean, exact_std) = rep.exact_mean_std();
            Ok(KCurveRow {
                n,
                exact_mean,
                exact_std,
                estimated_mean: rep.estimated_mean(),
                tv: rep.tv_distance,
            })
        })
        .collect()
}

/// TV and KL against the exact matching posterior over all N! matchings.
/// Dataset `i` uses the stream `(seed, "npp-exact", i)`.
pub fn npp_exact(model: &NppModel, spec: &GenerativeSpec, n: usize, count: usize, seed: u64) -> Result<SmallNReport> {
    let support = enumerate_permutations(n)?;
    let data = (0..count)
        .map(|i| match spec.sample_with_size(n, &mut rng::stream(seed, "npp-exact", i as u64))? {
            LabeledDataset::Pairs { x, y, .. } => Ok((x, y)),
            other => Err(Error::Config(format!("expected pair datasets, got {}", other.kind_name()))),
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = data
        .par_iter()
        .map(|(x, y)| {
            let exact = exact_matching_posterior(x, y, spec)?;
            let lp = model_joint_over_support(&model.posterior(x, y)?, &support)?;
            compare(&lp, &exact.log_probs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SmallNReport::from_rows(n, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// Largest |model − exact| per option (two clusters, then new).
    pub max_abs_dev: Vec<f64>,
    pub argmax_agreement: usize,
}

/// The two-cluster probe line evaluated with the exact conditional and `model`.
pub fn probe_report(model: &NcpModel, spec: &GenerativeSpec, seed: u64) -> Result<ProbeReport> {
    let line = probe_line(seed);
    let rows = line.evaluate(spec, |pts, prefix| model.conditional_given_prefix(pts, prefix))?;
    let opts = rows.first().map_or(0, |r| r.exact.len());
    let mut max_abs_dev = vec![0.0f64; opts];
    let mut argmax_agreement = 0;
    let argmax = |v: &[f64]| (0..v.len()).max_by(|a, b| v[*a].total_cmp(&v[*b])).unwrap_or(0);
    for r in &rows {
        for (k, m) in max_abs_dev.iter_mut().enumerate() {
            *m = m.max((r.model[k] - r.exact[k]).abs());
        }
        if argmax(&r.model) == argmax(&r.exact) {
            argmax_agreement += 1;
        }
    }
    Ok(ProbeReport { rows, max_abs_dev, argmax_agreement })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub beam_width: usize,
    pub ari: Vec<f64>,
    pub mean_ari: f64,
}

/// Beam-search MAP partitions of held-out graphs scored by adjusted Rand
/// index against the planted blocks. Graph `i` uses `(seed, "nbp-recovery", i)`.
pub fn nbp_recovery(model: &NbpModel, spec: &GenerativeSpec, count: usize, beam_width: usize, seed: u64) -> Result<RecoveryReport> {
    let graphs = (0..count)
        .map(|i| match spec.sample(&mut rng::stream(seed, "nbp-recovery", i as u64))? {
            LabeledDataset::Graph { adjacency, truth: Some(t) } => Ok((adjacency, t)),
            other => Err(Error::Config(format!("expected labeled graphs, got {}", other.kind_name()))),
        })
        .collect::<Result<Vec<_>>>()?;
    let ari = graphs
        .par_iter()
        .map(|(adj, truth)| {
            let best = model.beam_search(adj, beam_width)?;
            adjusted_rand_index(&best[0].labels, truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoveryReport { beam_width, mean_ari: mean_std(&ari).0, ari })
}
