use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::assignment::Assignment;
use crate::error::{contract, Result};

/// Sequential CRP draw: point i+1 joins cluster k w.p. n_k/(i+alpha), a new
/// cluster w.p. alpha/(i+alpha).
pub fn sample_crp<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Assignment {
    let mut labels = Vec::with_capacity(n);
    let mut sizes: Vec<usize> = Vec::new();
    for i in 0..n {
        let u = rng.random::<f64>() * (i as f64 + alpha);
        let mut acc = 0.0;
        let mut chosen = sizes.len();
        for (k, &s) in sizes.iter().enumerate() {
            acc += s as f64;
            if u < acc {
                chosen = k;
                break;
            }
        }
        if chosen == sizes.len() {
            sizes.push(0);
        }
        sizes[chosen] += 1;
        labels.push(chosen);
    }
    Assignment::new(labels).expect("sequential CRP labels are canonical")
}

/// Exact log p(labels) under CRP(alpha) as a product of predictive terms.
pub fn crp_log_prior(labels: &[usize], alpha: f64) -> Result<f64> {
    crate::assignment::check_canonical(labels)?;
    let mut sizes: Vec<usize> = Vec::new();
    let mut lp = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if i > 0 {
            let num = if l == sizes.len() { alpha } else { sizes[l] as f64 };
            lp += (num / (i as f64 + alpha)).ln();
        }
        if l == sizes.len() {
            sizes.push(0);
        }
        sizes[l] += 1;
    }
    Ok(lp)
}

/// Exact distribution of the number of clusters; entry `k-1` is P(K = k).
/// Convolves the independent Bernoulli(alpha/(alpha+i)) new-cluster
/// indicators for i = 0..n-1.
pub fn crp_k_distribution(n: usize, alpha: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(contract("crp_k_distribution needs n >= 1"));
    }
    // dist[j] = P(j new-cluster events so far)
    let mut dist = vec![1.0];
    for i in 0..n {
        let p = alpha / (alpha + i as f64);
        let mut next = vec![0.0; dist.len() + 1];
        for (j, &d) in dist.iter().enumerate() {
            next[j] += d * (1.0 - p);
            next[j + 1] += d * p;
        }
        dist = next;
    }
    // the first point always opens a cluster, so P(0 events) = 0
    Ok(dist[1..].to_vec())
}

/// K ~ 1 + Poisson(lambda); lambda = 0 gives K = 1.
pub fn sample_shifted_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    if lambda <= 0.0 {
        return 1;
    }
    let draw: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
    1 + draw as usize
}

/// Mixture-of-finite-mixtures labels: shifted-Poisson K, symmetric
/// Dirichlet weights, categorical draws, then empty components dropped by
/// canonicalization.
pub fn sample_mfm_labels<R: Rng + ?Sized>(
    lambda: f64,
    dirichlet_alpha: f64,
    n: usize,
    rng: &mut R,
) -> Assignment {
    let k = sample_shifted_poisson(lambda, rng);
    let gamma = Gamma::new(dirichlet_alpha, 1.0).expect("positive shape");
    let mut weights: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    if weights.iter().all(|&w| w <= 0.0) {
        // tiny shapes can underflow every gamma draw
        weights = vec![1.0; k];
    }
    let cat = WeightedIndex::new(&weights).expect("non-negative weights with positive sum");
    let raw: Vec<usize> = (0..n).map(|_| cat.sample(rng)).collect();
    Assignment::canonicalize(&raw)
}
