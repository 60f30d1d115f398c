//! Exact oracles and statistical checks for the trained samplers.

mod enumerate;
mod exchange;
mod gaussian;
mod geweke;
mod matching;
mod metrics;
mod probe;
mod sbm;
pub mod reports;

pub use enumerate::{bell_number, enumerate_partitions, enumerate_permutations, PARTITION_LIMIT, PERMUTATION_LIMIT};
pub use exchange::{exchangeability_monitor, ExchangeabilityReport, LabeledBatch, OrderingStats, DEFAULT_ORDERINGS};
pub use gaussian::{exact_clustering_posterior, exact_last_point_conditional, log_cluster_marginal, log_joint, members_of};
pub use geweke::{geweke_test, GewekeReport};
pub use matching::{exact_matching_posterior, log_permanent, pair_log_density, pair_log_matrix};
pub use metrics::adjusted_rand_index;
pub use probe::{probe_line, ProbeLine, ProbeRow};
pub use sbm::{exact_block_posterior, log_beta_binomial_ratio, log_graph_marginal};

use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::Assignment;
use crate::error::{contract, Result};
use crate::generative::PointSet;
use crate::math::{kl_divergence, total_variation};
use crate::ncp::NcpModel;
use crate::rng::StreamRng;
use crate::sequential::{log_prob_of, SequentialPosterior};

pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior<L> {
    pub support: Vec<L>,
    pub log_probs: Vec<f64>,
}

impl<L> ExactPosterior<L> {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|v| v.exp()).collect()
    }

    pub fn argmax(&self) -> usize {
        (0..self.log_probs.len())
            .max_by(|a, b| self.log_probs[*a].total_cmp(&self.log_probs[*b]))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distances {
    pub tv: f64,
    /// KL(exact ‖ model) with model probabilities floored at [`KL_FLOOR`].
    pub kl: f64,
    /// Model mass over the support; 1 up to rounding when the support is complete.
    pub model_mass: f64,
}

/// Chained model log-probabilities for every element of `support`, in order.
pub fn model_joint_over_support<P>(post: &P, support: &[P::Outcome]) -> Result<Vec<f64>>
where
    P: SequentialPosterior + Sync,
    P::Outcome: Sync,
{
    support.par_iter().map(|s| log_prob_of(post, s)).collect()
}

pub fn compare(model_log_probs: &[f64], exact: &[f64]) -> Result<Distances> {
    if model_log_probs.len() != exact.len() {
        return Err(contract("model and exact supports differ in size"));
    }
    let p: Vec<f64> = exact.iter().map(|v| v.exp()).collect();
    let q: Vec<f64> = model_log_probs.iter().map(|v| v.exp()).collect();
    Ok(Distances {
        tv: total_variation(&p, &q),
        kl: kl_divergence(&p, &q, KL_FLOOR),
        model_mass: q.iter().sum(),
    })
}

/// Anything that scores and samples cluster labels for a dataset.
pub trait ClusteringModel<D: ?Sized>: Sync {
    fn log_prob(&self, data: &D, labels: &Assignment) -> Result<f64>;
    fn sample(&self, data: &D, rng: &mut StreamRng) -> Result<Assignment>;
}

impl ClusteringModel<PointSet> for NcpModel {
    fn log_prob(&self, data: &PointSet, labels: &Assignment) -> Result<f64> {
        NcpModel::log_prob(self, data, labels)
    }

    fn sample(&self, data: &PointSet, rng: &mut StreamRng) -> Result<Assignment> {
        Ok(self.sample_assignment(data, rng)?.labels)
    }
}

/// Reference "model" whose conditionals are the exact CRP prior predictive,
/// ignoring the data. It is exchangeable, so its log-probabilities are
/// computed from the sorted cluster sizes and do not depend on point order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrpPriorModel {
    pub alpha: f64,
}

impl CrpPriorModel {
    pub fn log_prob_of(&self, labels: &Assignment) -> f64 {
        let mut sizes = labels.cluster_sizes();
        sizes.sort_unstable();
        let n = labels.len();
        let mut lp = (sizes.len().saturating_sub(1)) as f64 * self.alpha.ln();
        for s in sizes {
            for j in 1..s {
                lp += (j as f64).ln();
            }
        }
        for i in 1..n {
            lp -= (i as f64 + self.alpha).ln();
        }
        lp
    }
}

impl ClusteringModel<PointSet> for CrpPriorModel {
    fn log_prob(&self, data: &PointSet, labels: &Assignment) -> Result<f64> {
        if data.len() != labels.len() {
            return Err(contract("label count differs from point count"));
        }
        Ok(self.log_prob_of(labels))
    }

    fn sample(&self, data: &PointSet, rng: &mut StreamRng) -> Result<Assignment> {
        Ok(crate::generative::sample_crp(self.alpha, data.len(), rng))
    }
}
