//! Exact posteriors for the isotropic Gaussian mixture with a CRP prior and
//! N(0, σ_μ²I) cluster means.

use std::f64::consts::PI;

use super::enumerate::enumerate_partitions;
use super::ExactPosterior;
use crate::assignment::Assignment;
use crate::error::{contract, Error, Result};
use crate::generative::{crp_log_prior, GenerativeSpec, PointSet};
use crate::math::logsumexp;

/// (alpha, sigma_mu, sigma) of a CRP Gaussian spec.
fn crp_gauss_params(spec: &GenerativeSpec) -> Result<(f64, f64, f64)> {
    match spec {
        GenerativeSpec::CrpGauss2d(s) => Ok((s.alpha, s.sigma_mu, s.sigma)),
        other => Err(Error::Config(format!(
            "exact clustering posterior needs crp_gauss2d, got {}",
            other.kind_name()
        ))),
    }
}

/// log ∫ Π_i N(x_i; μ, σ²I) N(μ; 0, σ_μ²I) dμ over the listed points.
/// Per dimension the m values are jointly Gaussian with covariance
/// σ²I + σ_μ²·11ᵀ.
pub fn log_cluster_marginal(points: &PointSet, members: &[usize], sigma_mu: f64, sigma: f64) -> f64 {
    let m = members.len() as f64;
    if members.is_empty() {
        return 0.0;
    }
    let (s2, t2) = (sigma * sigma, sigma_mu * sigma_mu);
    let denom = s2 + m * t2;
    let logdet = (m - 1.0) * s2.ln() + denom.ln();
    let mut total = 0.0;
    for d in 0..points.dim() {
        let (mut sum, mut sq) = (0.0, 0.0);
        for &i in members {
            let v = points.point(i)[d];
            sum += v;
            sq += v * v;
        }
        let quad = (sq - t2 * sum * sum / denom) / s2;
        total += -0.5 * m * (2.0 * PI).ln() - 0.5 * logdet - 0.5 * quad;
    }
    total
}

pub fn members_of(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &c) in labels.iter().enumerate() {
        out[c].push(i);
    }
    out
}

/// Unnormalized log p(labels, x).
pub fn log_joint(points: &PointSet, labels: &Assignment, alpha: f64, sigma_mu: f64, sigma: f64) -> Result<f64> {
    let prior = crp_log_prior(labels.labels(), alpha)?;
    let lik: f64 = members_of(labels.labels())
        .iter()
        .map(|m| log_cluster_marginal(points, m, sigma_mu, sigma))
        .sum();
    Ok(prior + lik)
}

/// p(c | x) over every partition of the points.
pub fn exact_clustering_posterior(points: &PointSet, spec: &GenerativeSpec) -> Result<ExactPosterior<Assignment>> {
    let (alpha, sigma_mu, sigma) = crp_gauss_params(spec)?;
    let support = enumerate_partitions(points.len())?;
    let joint: Vec<f64> = support
        .iter()
        .map(|a| log_joint(points, a, alpha, sigma_mu, sigma))
        .collect::<Result<_>>()?;
    let z = logsumexp(&joint);
    Ok(ExactPosterior {
        support,
        log_probs: joint.iter().map(|v| v - z).collect(),
    })
}

/// p(c_N = k | c_{1:N−1}, x) for the last point, K+1 options.
pub fn exact_last_point_conditional(points: &PointSet, prefix: &[usize], spec: &GenerativeSpec) -> Result<Vec<f64>> {
    let (alpha, sigma_mu, sigma) = crp_gauss_params(spec)?;
    let n = points.len();
    if n == 0 || prefix.len() + 1 != n {
        return Err(contract("prefix must label all points but the last"));
    }
    crate::assignment::check_canonical(prefix)?;
    let clusters = members_of(prefix);
    let x = points.point(n - 1);
    let (s2, t2) = (sigma * sigma, sigma_mu * sigma_mu);
    let log_normal = |v: f64, mean: f64, var: f64| -0.5 * ((2.0 * PI * var).ln() + (v - mean).powi(2) / var);
    let mut scores = Vec::with_capacity(clusters.len() + 1);
    for mem in &clusters {
        let m = mem.len() as f64;
        let post_var = 1.0 / (1.0 / t2 + m / s2);
        let mut lp = (m / (n as f64 - 1.0 + alpha)).ln();
        for (d, &xd) in x.iter().enumerate() {
            let sum: f64 = mem.iter().map(|&i| points.point(i)[d]).sum();
            lp += log_normal(xd, post_var * sum / s2, s2 + post_var);
        }
        scores.push(lp);
    }
    let mut lp_new = (alpha / (n as f64 - 1.0 + alpha)).ln();
    for &xd in x {
        lp_new += log_normal(xd, 0.0, s2 + t2);
    }
    scores.push(lp_new);
    let z = logsumexp(&scores);
    Ok(scores.iter().map(|s| (s - z).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{sample_crp, CrpGaussSpec};
    use crate::math::total_variation;
    use crate::rng;

    fn spec(sigma_mu: f64) -> GenerativeSpec {
        GenerativeSpec::CrpGauss2d(CrpGaussSpec { sigma_mu, ..Default::default() })
    }

    fn pts(rows: &[[f64; 2]]) -> PointSet {
        PointSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Dense evaluation of the joint Gaussian density, one dimension at a time.
    fn dense_marginal(points: &PointSet, members: &[usize], sigma_mu: f64, sigma: f64) -> f64 {
        let m = members.len();
        let mut total = 0.0;
        for d in 0..points.dim() {
            let mut cov = vec![vec![sigma_mu * sigma_mu; m]; m];
            for (i, row) in cov.iter_mut().enumerate() {
                row[i] += sigma * sigma;
            }
            // Cholesky
            let mut l = vec![vec![0.0; m]; m];
            for i in 0..m {
                for j in 0..=i {
                    let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                    l[i][j] = if i == j { (cov[i][i] - s).sqrt() } else { (cov[i][j] - s) / l[j][j] };
                }
            }
            let v: Vec<f64> = members.iter().map(|&i| points.point(i)[d]).collect();
            let mut z = vec![0.0; m];
            for i in 0..m {
                z[i] = (v[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
            }
            let logdet: f64 = (0..m).map(|i| 2.0 * l[i][i].ln()).sum();
            total += -0.5 * (m as f64 * (2.0 * PI).ln() + logdet + z.iter().map(|x| x * x).sum::<f64>());
        }
        total
    }

    #[test]
    fn closed_form_marginal_matches_dense_gaussian() {
        let x = pts(&[[0.3, -1.0], [2.0, 0.5], [1.1, 1.7], [-0.4, 0.0]]);
        for members in [vec![0], vec![1, 3], vec![0, 1, 2, 3]] {
            let a = log_cluster_marginal(&x, &members, 3.0, 0.7);
            let b = dense_marginal(&x, &members, 3.0, 0.7);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_prior_scale_gives_independent_normals() {
        let x = pts(&[[0.3, -1.0], [2.0, 0.5], [1.1, 1.7]]);
        let direct: f64 = (0..3)
            .map(|i| x.point(i).iter().map(|v| -0.5 * (2.0 * PI).ln() - 0.5 * v * v).sum::<f64>())
            .sum();
        assert!((log_cluster_marginal(&x, &[0, 1, 2], 0.0, 1.0) - direct).abs() < 1e-12);
    }

    #[test]
    fn single_point_posterior() {
        let post = exact_clustering_posterior(&pts(&[[1.0, 2.0]]), &spec(10.0)).unwrap();
        assert_eq!(post.support.len(), 1);
        assert_eq!(post.log_probs, vec![0.0]);
    }

    #[test]
    fn posterior_normalizes() {
        let x = pts(&[[0.0, 0.0], [0.5, 0.1], [9.0, 9.0], [9.2, 8.7], [-7.0, 3.0]]);
        let post = exact_clustering_posterior(&x, &spec(10.0)).unwrap();
        assert_eq!(post.support.len(), 52);
        assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let best = post.argmax();
        assert_eq!(post.support[best].labels(), &[0, 0, 1, 1, 2]);
    }

    #[test]
    fn importance_sampling_cross_check() {
        // prior draws weighted by the likelihood estimate the same posterior
        let x = pts(&[[0.0, 0.0], [1.5, -0.5], [4.0, 3.0], [3.0, 4.5], [-1.0, 1.0]]);
        let (sigma_mu, sigma) = (3.0, 1.0);
        let post = exact_clustering_posterior(&x, &spec(sigma_mu)).unwrap();
        let draws = 100_000;
        let mut r = rng::stream(5, "is", 0);
        let mut weight = vec![0.0; post.support.len()];
        let mut w_sq = vec![0.0; post.support.len()];
        let mut total = 0.0;
        let mut total_sq = 0.0;
        for _ in 0..draws {
            let a = sample_crp(0.7, 5, &mut r);
            let w: f64 = members_of(a.labels()).iter().map(|m| log_cluster_marginal(&x, m, sigma_mu, sigma)).sum::<f64>().exp();
            let idx = post.support.iter().position(|s| s == &a).unwrap();
            weight[idx] += w;
            w_sq[idx] += w * w;
            total += w;
            total_sq += w * w;
        }
        let mean_w = total / draws as f64;
        for (i, p) in post.probs().iter().enumerate() {
            let est = weight[i] / total;
            // delta-method variance of the self-normalized estimator
            let spread = w_sq[i] * (1.0 - est).powi(2) + (total_sq - w_sq[i]) * est * est;
            let se = (spread / draws as f64).sqrt() / mean_w / (draws as f64).sqrt();
            assert!((est - p).abs() <= 3.0 * se, "partition {i}: {est} vs {p} (se {se})");
        }
    }

    #[test]
    fn last_point_conditional_agrees_with_full_posterior() {
        let x = pts(&[[0.0, 0.0], [1.0, 0.4], [6.0, 5.0], [5.5, 6.0], [2.0, 2.5]]);
        let s = spec(4.0);
        let prefix = [0, 0, 1, 1];
        let cond = exact_last_point_conditional(&x, &prefix, &s).unwrap();
        let post = exact_clustering_posterior(&x, &s).unwrap();
        let mut restricted = vec![0.0; 3];
        for (a, p) in post.support.iter().zip(post.probs()) {
            if a.labels()[..4] == prefix {
                restricted[a.labels()[4]] += p;
            }
        }
        let z: f64 = restricted.iter().sum();
        let restricted: Vec<f64> = restricted.iter().map(|v| v / z).collect();
        assert!(total_variation(&cond, &restricted) < 1e-10, "{cond:?} vs {restricted:?}");
    }

    #[test]
    fn last_point_limits() {
        let s = spec(10.0);
        let far = pts(&[[0.0, 0.0], [0.2, 0.0], [5.0, 0.0], [1e4, 1e4]]);
        let p = exact_last_point_conditional(&far, &[0, 0, 1], &s).unwrap();
        assert!(p[2] > 1.0 - 1e-12);
        // at cluster 0's predictive mean, cluster 0 beats its prior share
        let x = pts(&[[0.0, 0.0], [0.0, 0.0], [30.0, 0.0], [0.0, 0.0]]);
        let p = exact_last_point_conditional(&x, &[0, 0, 1], &s).unwrap();
        assert!(p[0] > 2.0 / 3.7);
        assert!(exact_last_point_conditional(&x, &[0, 0], &s).is_err());
    }
}
