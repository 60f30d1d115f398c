//! Exact matching posterior for noisy pairs: y_i pairs with x_{c_i},
//! p(c | x, y) ∝ Π_i p(x_{c_i}, y_i), normalized by a permanent.

use std::f64::consts::PI;

use super::enumerate::enumerate_permutations;
use super::ExactPosterior;
use crate::assignment::Permutation;
use crate::error::{contract, Error, Result};
use crate::generative::{GenerativeSpec, PointSet};
use crate::math::logsumexp;

/// log N(x; 0, prior_var·I) + log N(y; x, noise_var·I).
pub fn pair_log_density(x: &[f64], y: &[f64], prior_var: f64, noise_var: f64) -> f64 {
    let d = x.len() as f64;
    let sx: f64 = x.iter().map(|v| v * v).sum();
    let sy: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    -0.5 * d * (2.0 * PI * prior_var).ln() - 0.5 * sx / prior_var - 0.5 * d * (2.0 * PI * noise_var).ln() - 0.5 * sy / noise_var
}

pub(crate) fn pair_params(spec: &GenerativeSpec) -> Result<(f64, f64)> {
    match spec {
        GenerativeSpec::NoisyPairs2d(s) => Ok((s.prior_var, s.noise_var)),
        other => Err(Error::Config(format!("matching posterior needs noisy_pairs_2d, got {}", other.kind_name()))),
    }
}

/// `L[i][j] = log p(x_j, y_i)`, row-major.
pub fn pair_log_matrix(x: &PointSet, y: &PointSet, prior_var: f64, noise_var: f64) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.dim() != y.dim() {
        return Err(contract("x and y must hold the same number of points of the same dimension"));
    }
    let n = x.len();
    let mut l = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            l.push(pair_log_density(x.point(j), y.point(i), prior_var, noise_var));
        }
    }
    Ok(l)
}

pub fn exact_matching_posterior(x: &PointSet, y: &PointSet, spec: &GenerativeSpec) -> Result<ExactPosterior<Permutation>> {
    let (prior_var, noise_var) = pair_params(spec)?;
    let l = pair_log_matrix(x, y, prior_var, noise_var)?;
    let n = x.len();
    let support = enumerate_permutations(n)?;
    let joint: Vec<f64> = support
        .iter()
        .map(|p| p.as_slice().iter().enumerate().map(|(i, &j)| l[i * n + j]).sum())
        .collect();
    let z = logsumexp(&joint);
    Ok(ExactPosterior {
        support,
        log_probs: joint.iter().map(|v| v - z).collect(),
    })
}

/// log perm(exp(L)) by Ryser's formula with per-row max scaling.
/// O(2^n · n²); fine for the small n used by the oracles.
pub fn log_permanent(log_matrix: &[f64], n: usize) -> Result<f64> {
    if log_matrix.len() != n * n {
        return Err(contract("matrix is not n×n"));
    }
    if n > 20 {
        return Err(Error::Guard { what: "permanent", n, limit: 20 });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let row_max: Vec<f64> = (0..n)
        .map(|i| log_matrix[i * n..(i + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let a: Vec<f64> = (0..n * n).map(|k| (log_matrix[k] - row_max[k / n]).exp()).collect();
    let mut total = 0.0;
    for subset in 1u32..(1 << n) {
        let mut prod = 1.0;
        for i in 0..n {
            let s: f64 = (0..n).filter(|j| subset & (1 << j) != 0).map(|j| a[i * n + j]).sum();
            prod *= s;
        }
        let sign = if (n - subset.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * prod;
    }
    Ok(total.ln() + row_max.iter().sum::<f64>())
}
