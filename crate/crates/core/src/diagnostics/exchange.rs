use rand::seq::SliceRandom;
use serde::Serialize;

use super::ClusteringModel;
use crate::assignment::Assignment;
use crate::error::{contract, Result};
use crate::generative::PointSet;
use crate::math::{mean_std, median};
use crate::rng;

pub const DEFAULT_ORDERINGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingStats {
    pub nlls: Vec<f64>,
    pub mean_nll: f64,
    /// Sample standard deviation over the orderings.
    pub std_nll: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExchangeabilityReport {
    pub orderings: usize,
    pub per_batch: Vec<OrderingStats>,
    pub median_ratio: f64,
}

/// A minibatch as used in training: several point sets of one size that
/// share the same labels.
pub type LabeledBatch = (Vec<PointSet>, Assignment);

/// Teacher-forced NLL of each batch, summed over its point sets, under
/// `orderings` random reorderings applied to the whole batch at once. Batch
/// `b` uses the stream `(seed, "orderings", b)`.
pub fn exchangeability_monitor<M: ClusteringModel<PointSet>>(
    model: &M,
    batches: &[LabeledBatch],
    orderings: usize,
    seed: u64,
) -> Result<ExchangeabilityReport> {
    if orderings < 2 {
        return Err(contract("at least two orderings are needed"));
    }
    let mut per_batch = Vec::with_capacity(batches.len());
    for (b, (sets, labels)) in batches.iter().enumerate() {
        if sets.is_empty() || sets.iter().any(|p| p.len() != labels.len()) {
            return Err(contract("every point set in a batch needs one label per point"));
        }
        let mut r = rng::stream(seed, "orderings", b as u64);
        let mut nlls = Vec::with_capacity(orderings);
        for _ in 0..orderings {
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.shuffle(&mut r);
            let permuted = labels.permuted(&order);
            let mut nll = 0.0;
            for points in sets {
                nll -= model.log_prob(&points.reordered(&order), &permuted)?;
            }
            nlls.push(nll);
        }
        let (mean_nll, std_nll) = mean_std(&nlls);
        per_batch.push(OrderingStats { nlls, mean_nll, std_nll, ratio: std_nll / mean_nll });
    }
    let ratios: Vec<f64> = per_batch.iter().map(|s| s.ratio).collect();
    Ok(ExchangeabilityReport {
        orderings,
        median_ratio: median(&ratios),
        per_batch,
    })
}
