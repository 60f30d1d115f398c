//! Generative models used both to synthesize training data and as exact
//! oracles.

mod crp;
mod data;
mod models;

pub use crp::{crp_k_distribution, crp_log_prior, sample_crp, sample_mfm_labels, sample_shifted_poisson};
pub use data::{Adjacency, LabeledDataset, PointSet};
pub use models::{
    sample_drifting_particles, sample_gauss2d, sample_noisy_pairs, sample_sbm, sample_sbm_given_phi,
    sample_sbm_phi,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::error::{Error, Result};

/// Inclusive integer range, serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct NRange {
    pub min: usize,
    pub max: usize,
}

impl NRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min == 0 || min > max {
            return Err(Error::Config(format!("empty or zero size range [{min}, {max}]")));
        }
        Ok(NRange { min, max })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

impl TryFrom<[usize; 2]> for NRange {
    type Error = Error;
    fn try_from(v: [usize; 2]) -> Result<Self> {
        NRange::new(v[0], v[1])
    }
}

impl From<NRange> for [usize; 2] {
    fn from(r: NRange) -> Self {
        [r.min, r.max]
    }
}

/// DPMM of isotropic 2D Gaussians. `sigma_mu` and `sigma` are standard
/// deviations of the cluster means and of the observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrpGaussSpec {
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::sigma_mu")]
    pub sigma_mu: f64,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::n_range_clusters")]
    pub n_range: NRange,
}

impl Default for CrpGaussSpec {
    fn default() -> Self {
        CrpGaussSpec {
            alpha: defaults::alpha(),
            sigma_mu: defaults::sigma_mu(),
            sigma: defaults::sigma(),
            n_range: defaults::n_range_clusters(),
        }
    }
}

/// Mixture of finite mixtures: K ~ 1 + Poisson(lambda), symmetric Dirichlet
/// weights, Gaussian clusters as in [`CrpGaussSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfmGaussSpec {
    #[serde(default = "defaults::mfm_lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::one")]
    pub dirichlet_alpha: f64,
    #[serde(default = "defaults::sigma_mu")]
    pub sigma_mu: f64,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::n_range_clusters")]
    pub n_range: NRange,
}

impl Default for MfmGaussSpec {
    fn default() -> Self {
        MfmGaussSpec {
            lambda: defaults::mfm_lambda(),
            dirichlet_alpha: 1.0,
            sigma_mu: defaults::sigma_mu(),
            sigma: defaults::sigma(),
            n_range: defaults::n_range_clusters(),
        }
    }
}

/// Stochastic block model with CRP blocks and Beta block densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::beta_shape")]
    pub beta_a: f64,
    #[serde(default = "defaults::beta_shape")]
    pub beta_b: f64,
    #[serde(default = "defaults::n_range_graphs")]
    pub n_range: NRange,
    /// When set, block densities are redrawn until every within-block
    /// density exceeds every between-block density by at least this gap.
    #[serde(default)]
    pub assortative_gap: Option<f64>,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            alpha: defaults::alpha(),
            beta_a: defaults::beta_shape(),
            beta_b: defaults::beta_shape(),
            n_range: defaults::n_range_graphs(),
            assortative_gap: None,
        }
    }
}

/// Noisy 2D pairs under a uniform random matching. Both parameters are
/// variances: x ~ N(0, prior_var·I), y ~ N(x, noise_var·I).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyPairsSpec {
    #[serde(default = "defaults::prior_var")]
    pub prior_var: f64,
    #[serde(default = "defaults::noise_var")]
    pub noise_var: f64,
    #[serde(default = "defaults::n_range_pairs")]
    pub n_range: NRange,
}

impl Default for NoisyPairsSpec {
    fn default() -> Self {
        NoisyPairsSpec {
            prior_var: defaults::prior_var(),
            noise_var: defaults::noise_var(),
            n_range: defaults::n_range_pairs(),
        }
    }
}

/// Particles with Gaussian random-walk means, one observation per time step.
/// Which particle is observed follows CRP(alpha) over time (a new particle
/// appears with probability alpha/(t-1+alpha)); a particle that is never
/// observed again has implicitly disappeared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Std of a particle's position when it first appears.
    #[serde(default = "defaults::sigma_mu")]
    pub sigma_mu: f64,
    /// Std of the observation noise.
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    /// Per-step variance of the random walk.
    #[serde(default = "defaults::walk_var")]
    pub walk_var: f64,
    #[serde(default = "defaults::t_range")]
    pub t_range: NRange,
}

impl Default for ParticleSpec {
    fn default() -> Self {
        ParticleSpec {
            alpha: defaults::alpha(),
            sigma_mu: defaults::sigma_mu(),
            sigma: defaults::sigma(),
            walk_var: defaults::walk_var(),
            t_range: defaults::t_range(),
        }
    }
}

mod defaults {
    use super::NRange;
    pub fn alpha() -> f64 {
        0.7
    }
    pub fn sigma_mu() -> f64 {
        10.0
    }
    pub fn sigma() -> f64 {
        1.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn mfm_lambda() -> f64 {
        2.0
    }
    pub fn beta_shape() -> f64 {
        0.2
    }
    pub fn prior_var() -> f64 {
        3.0
    }
    pub fn noise_var() -> f64 {
        0.6
    }
    pub fn walk_var() -> f64 {
        0.25
    }
    pub fn n_range_clusters() -> NRange {
        NRange { min: 5, max: 100 }
    }
    pub fn n_range_graphs() -> NRange {
        NRange { min: 10, max: 30 }
    }
    pub fn n_range_pairs() -> NRange {
        NRange { min: 2, max: 20 }
    }
    pub fn t_range() -> NRange {
        NRange { min: 10, max: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenerativeSpec {
    CrpGauss2d(CrpGaussSpec),
    MfmGauss2d(MfmGaussSpec),
    SbmBetaBernoulli(SbmSpec),
    #[serde(rename = "noisy_pairs_2d")]
    NoisyPairs2d(NoisyPairsSpec),
    DriftingParticles(ParticleSpec),
}

impl GenerativeSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            GenerativeSpec::CrpGauss2d(_) => "crp_gauss2d",
            GenerativeSpec::MfmGauss2d(_) => "mfm_gauss2d",
            GenerativeSpec::SbmBetaBernoulli(_) => "sbm_beta_bernoulli",
            GenerativeSpec::NoisyPairs2d(_) => "noisy_pairs_2d",
            GenerativeSpec::DriftingParticles(_) => "drifting_particles",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be strictly positive, got {v}")))
            }
        };
        match self {
            GenerativeSpec::CrpGauss2d(s) => {
                positive("alpha", s.alpha)?;
                positive("sigma_mu", s.sigma_mu)?;
                positive("sigma", s.sigma)
            }
            GenerativeSpec::MfmGauss2d(s) => {
                positive("lambda", s.lambda)?;
                positive("dirichlet_alpha", s.dirichlet_alpha)?;
                positive("sigma_mu", s.sigma_mu)?;
                positive("sigma", s.sigma)
            }
            GenerativeSpec::SbmBetaBernoulli(s) => {
                positive("alpha", s.alpha)?;
                positive("beta_a", s.beta_a)?;
                positive("beta_b", s.beta_b)?;
                if let Some(gap) = s.assortative_gap {
                    if !(0.0..1.0).contains(&gap) {
                        return Err(Error::Config(format!("assortative_gap must be in [0,1), got {gap}")));
                    }
                }
                Ok(())
            }
            GenerativeSpec::NoisyPairs2d(s) => {
                positive("prior_var", s.prior_var)?;
                positive("noise_var", s.noise_var)
            }
            GenerativeSpec::DriftingParticles(s) => {
                positive("alpha", s.alpha)?;
                positive("sigma_mu", s.sigma_mu)?;
                positive("sigma", s.sigma)?;
                if s.walk_var >= 0.0 && s.walk_var.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("walk_var must be non-negative, got {}", s.walk_var)))
                }
            }
        }
    }

    pub fn size_range(&self) -> NRange {
        match self {
            GenerativeSpec::CrpGauss2d(s) => s.n_range,
            GenerativeSpec::MfmGauss2d(s) => s.n_range,
            GenerativeSpec::SbmBetaBernoulli(s) => s.n_range,
            GenerativeSpec::NoisyPairs2d(s) => s.n_range,
            GenerativeSpec::DriftingParticles(s) => s.t_range,
        }
    }

    /// Labels from the prior for a dataset of size `n` (cluster kinds only).
    pub fn sample_labels<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Assignment> {
        match self {
            GenerativeSpec::CrpGauss2d(s) => Ok(sample_crp(s.alpha, n, rng)),
            GenerativeSpec::MfmGauss2d(s) => Ok(sample_mfm_labels(s.lambda, s.dirichlet_alpha, n, rng)),
            GenerativeSpec::SbmBetaBernoulli(s) => Ok(sample_crp(s.alpha, n, rng)),
            GenerativeSpec::DriftingParticles(s) => Ok(sample_crp(s.alpha, n, rng)),
            GenerativeSpec::NoisyPairs2d(_) => Err(Error::Config(
                "noisy_pairs_2d has permutation latents, not cluster labels".into(),
            )),
        }
    }

    /// Observations conditioned on cluster labels.
    pub fn sample_given_labels<R: Rng + ?Sized>(
        &self,
        labels: &Assignment,
        rng: &mut R,
    ) -> Result<LabeledDataset> {
        match self {
            GenerativeSpec::CrpGauss2d(s) => Ok(sample_gauss2d(labels, s.sigma_mu, s.sigma, rng)),
            GenerativeSpec::MfmGauss2d(s) => Ok(sample_gauss2d(labels, s.sigma_mu, s.sigma, rng)),
            GenerativeSpec::SbmBetaBernoulli(s) => sample_sbm(labels, s, rng),
            GenerativeSpec::DriftingParticles(s) => Ok(models::particles_given_labels(labels, s, rng)),
            GenerativeSpec::NoisyPairs2d(_) => Err(Error::Config(
                "noisy_pairs_2d datasets are drawn with sample(), not from cluster labels".into(),
            )),
        }
    }

    /// Full draw: size, latent structure, observations.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LabeledDataset> {
        let n = self.size_range().sample(rng);
        self.sample_with_size(n, rng)
    }

    pub fn sample_with_size<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledDataset> {
        match self {
            GenerativeSpec::NoisyPairs2d(s) => Ok(sample_noisy_pairs(n, s.prior_var, s.noise_var, rng)),
            _ => {
                let labels = self.sample_labels(n, rng)?;
                self.sample_given_labels(&labels, rng)
            }
        }
    }
}
