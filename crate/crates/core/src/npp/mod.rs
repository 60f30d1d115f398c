//! Neural Permutation Process: posterior over matchings of y's to x's,
//! one factor per y with a learned log-permanent correction R.

mod loss;
mod state;
mod train;

pub use loss::{npp_nll, npp_nll_and_grads, npp_nll_and_grads_replicas, NppGrads};
pub use state::{EncodedPairs, MatchState, NppPosterior};
pub use train::{draw_pairs_minibatch, train_npp};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::Permutation;
use crate::checkpoint::Checkpoint;
use crate::diagnostics::pair_log_density;
use crate::error::{contract, Error, Result};
use crate::generative::PointSet;
use crate::nn::{Network, NetworkSpec};
use crate::sequential::{self, PosteriorSample};

pub const TASK: &str = "npp";

/// (s1, s2, s3) = (a + b, a·b, (a − b)²) componentwise, concatenated.
/// Each entry is computed by a commutative expression, so swapping the
/// arguments gives a bitwise-identical result.
pub fn symmetric_features(a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = a.len();
    let mut out = vec![0.0; 3 * d];
    write_features(a, b, &mut out);
    out
}

pub(crate) fn write_features(a: &[f64], b: &[f64], out: &mut [f64]) {
    let d = a.len();
    for j in 0..d {
        let diff = (a[j] - b[j]).abs();
        out[j] = a[j] + b[j];
        out[d + j] = a[j] * b[j];
        out[2 * d + j] = diff * diff;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairDensity {
    Gaussian { prior_var: f64, noise_var: f64 },
    /// Network on concat(x, y) returning a log-density up to a constant.
    Learned(Network),
}

impl PairDensity {
    pub fn gaussian(prior_var: f64, noise_var: f64) -> Result<Self> {
        if !(prior_var > 0.0 && noise_var > 0.0) {
            return Err(Error::Config(format!(
                "pair density variances must be positive, got {prior_var} and {noise_var}"
            )));
        }
        Ok(PairDensity::Gaussian { prior_var, noise_var })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NppArch {
    pub g: Vec<usize>,
    #[serde(rename = "R")]
    pub r: Vec<usize>,
}

impl NppArch {
    pub fn pairs_2d() -> Self {
        NppArch {
            g: vec![2, 64, 64, 64, 256],
            r: vec![768, 64, 64, 64, 1],
        }
    }

    pub fn pairs_2d_half() -> Self {
        NppArch {
            g: vec![2, 32, 32, 32, 128],
            r: vec![384, 32, 32, 32, 1],
        }
    }

    pub fn toy(width: usize) -> Self {
        NppArch {
            g: vec![2, width, width],
            r: vec![3 * width, width, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NppModel {
    pub g: Network,
    pub r: Network,
    pub density: PairDensity,
}

impl NppModel {
    pub fn new(g: Network, r: Network, density: PairDensity) -> Result<Self> {
        if r.input_width() != 3 * g.output_width() {
            return Err(contract(format!(
                "R input width {} differs from 3·d_g = {}",
                r.input_width(),
                3 * g.output_width()
            )));
        }
        if r.output_width() != 1 {
            return Err(contract("R must output a single value"));
        }
        if let PairDensity::Learned(net) = &density {
            if net.input_width() != 2 * g.input_width() || net.output_width() != 1 {
                return Err(contract("learned pair density must map concat(x, y) to one value"));
            }
        }
        Ok(NppModel { g, r, density })
    }

    pub fn init<R: Rng + ?Sized>(arch: &NppArch, density: PairDensity, rng: &mut R) -> Result<Self> {
        let g = Network::init(NetworkSpec::new(arch.g.clone())?, rng)?;
        let r = Network::init(NetworkSpec::new(arch.r.clone())?, rng)?;
        NppModel::new(g, r, density)
    }

    pub fn d_x(&self) -> usize {
        self.g.input_width()
    }

    pub fn d_g(&self) -> usize {
        self.g.output_width()
    }

    pub fn networks(&self) -> Vec<(&'static str, &Network)> {
        let mut v = vec![("g", &self.g), ("R", &self.r)];
        if let PairDensity::Learned(net) = &self.density {
            v.push(("density", net));
        }
        v
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Network> {
        let mut v = vec![&mut self.g, &mut self.r];
        if let PairDensity::Learned(net) = &mut self.density {
            v.push(net);
        }
        v
    }

    /// `L[i][j] = log p(x_j, y_i)`, row-major.
    pub fn pair_log_matrix(&self, x: &PointSet, y: &PointSet) -> Result<Vec<f64>> {
        let n = x.len();
        match &self.density {
            PairDensity::Gaussian { prior_var, noise_var } => {
                crate::diagnostics::pair_log_matrix(x, y, *prior_var, *noise_var)
            }
            PairDensity::Learned(net) => net.forward_batch(&pair_rows(x, y), n * n),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(TASK);
        c.networks = self.networks().into_iter().map(|(n, net)| (n.to_string(), net.clone())).collect();
        if let PairDensity::Gaussian { prior_var, noise_var } = self.density {
            c.scalars.insert("prior_var".into(), prior_var);
            c.scalars.insert("noise_var".into(), noise_var);
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.require_task(TASK)?;
        let density = match c.network("density") {
            Some(net) => PairDensity::Learned(net.clone()),
            None => {
                let get = |k: &str| {
                    c.scalars
                        .get(k)
                        .copied()
                        .ok_or_else(|| Error::Format(format!("checkpoint lacks scalar {k:?}")))
                };
                PairDensity::gaussian(get("prior_var")?, get("noise_var")?)?
            }
        };
        NppModel::new(c.require_network("g")?, c.require_network("R")?, density)
    }

    pub fn posterior(&self, x: &PointSet, y: &PointSet) -> Result<NppPosterior<'_>> {
        Ok(NppPosterior::new(self, Arc::new(EncodedPairs::new(self, x, y)?)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &PointSet, y: &PointSet, rng: &mut R) -> Result<PosteriorSample<Permutation>> {
        sequential::sample_one(&self.posterior(x, y)?, rng)
    }

    pub fn sample_batch(&self, x: &PointSet, y: &PointSet, count: usize, seed: u64) -> Result<Vec<PosteriorSample<Permutation>>> {
        if count == 0 {
            return Err(contract("sample count must be at least 1"));
        }
        sequential::sample_batch(&self.posterior(x, y)?, count, seed)
    }

    pub fn beam_search(&self, x: &PointSet, y: &PointSet, beam_width: usize) -> Result<Vec<PosteriorSample<Permutation>>> {
        sequential::beam_search(&self.posterior(x, y)?, beam_width)
    }

    pub fn log_prob(&self, x: &PointSet, y: &PointSet, perm: &Permutation) -> Result<f64> {
        if perm.len() != y.len() {
            return Err(contract("permutation length differs from the number of pairs"));
        }
        sequential::log_prob_of(&self.posterior(x, y)?, perm)
    }
}

/// Rows concat(x_j, y_i) in (i, j) order.
pub(crate) fn pair_rows(x: &PointSet, y: &PointSet) -> Vec<f64> {
    let n = x.len();
    let mut rows = Vec::with_capacity(n * n * 2 * x.dim());
    for i in 0..n {
        for j in 0..n {
            rows.extend_from_slice(x.point(j));
            rows.extend_from_slice(y.point(i));
        }
    }
    rows
}

/// Closed-form log p(x, y) for the Gaussian pair model.
pub fn gaussian_pair_log_density(x: &[f64], y: &[f64], prior_var: f64, noise_var: f64) -> Result<f64> {
    if !(prior_var > 0.0 && noise_var > 0.0) {
        return Err(Error::Config("pair density variances must be positive".into()));
    }
    if x.len() != y.len() {
        return Err(contract("x and y dimensions differ"));
    }
    Ok(pair_log_density(x, y, prior_var, noise_var))
}
