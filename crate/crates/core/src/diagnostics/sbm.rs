use super::{enumerate_partitions, ExactPosterior};
use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::generative::{crp_log_prior, Adjacency, GenerativeSpec};
use crate::math::logsumexp;

/// log of B(a + ones, b + zeros) / B(a, b) for integer counts, as a product
/// of rising factors.
pub fn log_beta_binomial_ratio(ones: u64, zeros: u64, a: f64, b: f64) -> f64 {
    let mut lp = 0.0;
    for i in 0..ones {
        lp += (a + i as f64).ln();
    }
    for j in 0..zeros {
        lp += (b + j as f64).ln();
    }
    for t in 0..ones + zeros {
        lp -= (a + b + t as f64).ln();
    }
    lp
}

/// log p(x | c) with the block densities integrated out. Entries with
/// i ≤ j (diagonal included) are the independent observations.
pub fn log_graph_marginal(adj: &Adjacency, labels: &Assignment, beta_a: f64, beta_b: f64) -> f64 {
    let k = labels.num_clusters();
    let c = labels.labels();
    let mut ones = vec![0u64; k * k];
    let mut zeros = vec![0u64; k * k];
    for i in 0..adj.n() {
        for j in i..adj.n() {
            let (a, b) = (c[i].min(c[j]), c[i].max(c[j]));
            if adj.get(i, j) == 1 {
                ones[a * k + b] += 1;
            } else {
                zeros[a * k + b] += 1;
            }
        }
    }
    let mut lp = 0.0;
    for a in 0..k {
        for b in a..k {
            lp += log_beta_binomial_ratio(ones[a * k + b], zeros[a * k + b], beta_a, beta_b);
        }
    }
    lp
}

/// p(c | x) over every partition of the rows for a CRP block model.
pub fn exact_block_posterior(adj: &Adjacency, spec: &GenerativeSpec) -> Result<ExactPosterior<Assignment>> {
    let GenerativeSpec::SbmBetaBernoulli(s) = spec else {
        return Err(Error::Config(format!("block posterior needs sbm_beta_bernoulli, got {}", spec.kind_name())));
    };
    let support = enumerate_partitions(adj.n())?;
    let joint: Vec<f64> = support
        .iter()
        .map(|c| Ok(crp_log_prior(c.labels(), s.alpha)? + log_graph_marginal(adj, c, s.beta_a, s.beta_b)))
        .collect::<Result<_>>()?;
    let z = logsumexp(&joint);
    Ok(ExactPosterior {
        support,
        log_probs: joint.iter().map(|v| v - z).collect(),
    })
}
