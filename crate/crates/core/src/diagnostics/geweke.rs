use rayon::prelude::*;
use serde::Serialize;

use super::ClusteringModel;
use crate::error::{contract, Error, Result};
use crate::generative::{crp_k_distribution, GenerativeSpec, LabeledDataset, PointSet};
use crate::math::total_variation;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GewekeReport {
    pub n: usize,
    /// Entry k−1 holds P(K = k).
    pub exact_k_dist: Vec<f64>,
    pub estimated_k_hist: Vec<f64>,
    pub tv_distance: f64,
    pub sample_count: usize,
}

impl GewekeReport {
    pub fn exact_mean_std(&self) -> (f64, f64) {
        moments(&self.exact_k_dist)
    }

    pub fn estimated_mean(&self) -> f64 {
        moments(&self.estimated_k_hist).0
    }

    /// 3·√(Σ p(1−p))/√S: the scale of TV expected from sampling noise alone.
    pub fn noise_bound(&self) -> f64 {
        let s: f64 = self.exact_k_dist.iter().map(|p| p * (1.0 - p)).sum();
        3.0 * s.sqrt() / (self.sample_count as f64).sqrt()
    }
}

fn moments(dist: &[f64]) -> (f64, f64) {
    let mean: f64 = dist.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    let var: f64 = dist.iter().enumerate().map(|(i, p)| ((i + 1) as f64 - mean).powi(2) * p).sum();
    (mean, var.sqrt())
}

/// Draws x from the generative marginal, samples labels from the model,
/// and compares the histogram of K with the exact prior distribution.
/// Draw `i` uses the stream `(seed, "geweke", i)`.
pub fn geweke_test<M: ClusteringModel<PointSet>>(
    model: &M,
    spec: &GenerativeSpec,
    n: usize,
    sample_count: usize,
    seed: u64,
) -> Result<GewekeReport> {
    let alpha = match spec {
        GenerativeSpec::CrpGauss2d(s) => s.alpha,
        other => return Err(Error::Config(format!("geweke test needs crp_gauss2d, got {}", other.kind_name()))),
    };
    if sample_count == 0 || n == 0 {
        return Err(contract("geweke test needs n ≥ 1 and at least one sample"));
    }
    let exact = crp_k_distribution(n, alpha)?;
    let ks: Vec<usize> = (0..sample_count)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut r = rng::stream(seed, "geweke", i as u64);
            let points = match spec.sample_with_size(n, &mut r)? {
                LabeledDataset::Clustering { points, .. } => points,
                _ => unreachable!("crp_gauss2d yields point sets"),
            };
            Ok(model.sample(&points, &mut r)?.num_clusters())
        })
        .collect::<Result<_>>()?;
    let mut hist = vec![0.0; n];
    for k in ks {
        hist[k - 1] += 1.0 / sample_count as f64;
    }
    Ok(GewekeReport {
        n,
        tv_distance: total_variation(&exact, &hist),
        exact_k_dist: exact,
        estimated_k_hist: hist,
        sample_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::CrpPriorModel;
    use crate::generative::CrpGaussSpec;

    #[test]
    fn reference_model_passes_at_three_sigma() {
        let spec = GenerativeSpec::CrpGauss2d(CrpGaussSpec::default());
        let m = CrpPriorModel { alpha: 0.7 };
        for (n, s) in [(30, 4000), (10, 500), (5, 50)] {
            let rep = geweke_test(&m, &spec, n, s, 11).unwrap();
            assert_eq!(rep.exact_k_dist, crp_k_distribution(n, 0.7).unwrap());
            assert!((rep.estimated_k_hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(rep.tv_distance <= rep.noise_bound(), "n={n}: {} > {}", rep.tv_distance, rep.noise_bound());
        }
    }

    #[test]
    fn non_crp_spec_is_rejected() {
        let spec = GenerativeSpec::MfmGauss2d(Default::default());
        assert!(geweke_test(&CrpPriorModel { alpha: 0.7 }, &spec, 5, 10, 0).is_err());
    }
}
