//! Neural Clustering Process: assignment model, incremental sampling state,
//! teacher-forced loss and training.

mod loss;
mod state;
mod train;

pub use loss::{nll_loss, nll_loss_and_grads, nll_loss_and_grads_replicas, NcpGrads};
pub use state::{conditional_probs, ClusterState, EncodedPoints, NcpPosterior};
pub(crate) use state::{encode_h, sum_rows};
pub use train::{draw_minibatch, train};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::checkpoint::Checkpoint;
use crate::error::{contract, Result};
use crate::generative::PointSet;
use crate::nn::{Network, NetworkSpec};
use crate::sequential::{self, PosteriorSample};

pub const TASK: &str = "ncp";

#[derive(Debug, Clone, PartialEq)]
pub enum PointEncoder {
    /// h(x) = (1, x).
    SufficientStats,
    Learned(Network),
}

/// Layer widths of the four networks; `h: None` selects sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcpArch {
    pub d_x: usize,
    #[serde(default)]
    pub h: Option<Vec<usize>>,
    pub q: Vec<usize>,
    pub g: Vec<usize>,
    pub f: Vec<usize>,
}

impl NcpArch {
    /// Full-size networks for 2D points.
    pub fn gaussian_2d() -> Self {
        NcpArch {
            d_x: 2,
            h: None,
            q: vec![2, 64, 64, 64, 256],
            g: vec![3, 128, 128, 128, 128, 256],
            f: vec![512, 128, 128, 128, 128, 1],
        }
    }

    /// Same depth with every hidden and embedding width halved.
    pub fn gaussian_2d_half() -> Self {
        NcpArch {
            d_x: 2,
            h: None,
            q: vec![2, 32, 32, 32, 128],
            g: vec![3, 64, 64, 64, 64, 128],
            f: vec![256, 64, 64, 64, 64, 1],
        }
    }

    /// Tiny widths for tests.
    pub fn toy(d_x: usize, width: usize) -> Self {
        NcpArch {
            d_x,
            h: None,
            q: vec![d_x, width, width],
            g: vec![d_x + 1, width, width],
            f: vec![2 * width, width, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcpModel {
    pub h: PointEncoder,
    pub q: Network,
    pub g: Network,
    pub f: Network,
}

impl NcpModel {
    pub fn new(h: PointEncoder, q: Network, g: Network, f: Network) -> Result<Self> {
        let d_x = q.input_width();
        let d_h = match &h {
            PointEncoder::SufficientStats => d_x + 1,
            PointEncoder::Learned(net) => {
                if net.input_width() != d_x {
                    return Err(contract("h and q must read points of the same dimension"));
                }
                net.output_width()
            }
        };
        if g.input_width() != d_h {
            return Err(contract(format!("g input width {} differs from d_h = {d_h}", g.input_width())));
        }
        if f.input_width() != g.output_width() + q.output_width() {
            return Err(contract(format!(
                "f input width {} differs from d_g + d_q = {}",
                f.input_width(),
                g.output_width() + q.output_width()
            )));
        }
        if f.output_width() != 1 {
            return Err(contract("f must output a single logit"));
        }
        Ok(NcpModel { h, q, g, f })
    }

    pub fn init<R: Rng + ?Sized>(arch: &NcpArch, rng: &mut R) -> Result<Self> {
        let h = match &arch.h {
            None => PointEncoder::SufficientStats,
            Some(w) => PointEncoder::Learned(Network::init(NetworkSpec::new(w.clone())?, rng)?),
        };
        let q = Network::init(NetworkSpec::new(arch.q.clone())?, rng)?;
        let g = Network::init(NetworkSpec::new(arch.g.clone())?, rng)?;
        let f = Network::init(NetworkSpec::new(arch.f.clone())?, rng)?;
        if q.input_width() != arch.d_x {
            return Err(contract("q input width differs from d_x"));
        }
        NcpModel::new(h, q, g, f)
    }

    pub fn arch(&self) -> NcpArch {
        NcpArch {
            d_x: self.d_x(),
            h: match &self.h {
                PointEncoder::SufficientStats => None,
                PointEncoder::Learned(n) => Some(n.spec().layer_widths.clone()),
            },
            q: self.q.spec().layer_widths.clone(),
            g: self.g.spec().layer_widths.clone(),
            f: self.f.spec().layer_widths.clone(),
        }
    }

    pub fn d_x(&self) -> usize {
        self.q.input_width()
    }

    pub fn d_h(&self) -> usize {
        self.g.input_width()
    }

    pub fn d_q(&self) -> usize {
        self.q.output_width()
    }

    pub fn d_g(&self) -> usize {
        self.g.output_width()
    }

    /// Named networks in checkpoint order.
    pub fn networks(&self) -> Vec<(&'static str, &Network)> {
        let mut v = Vec::new();
        if let PointEncoder::Learned(h) = &self.h {
            v.push(("h", h));
        }
        v.extend([("q", &self.q), ("g", &self.g), ("f", &self.f)]);
        v
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Network> {
        let mut v = Vec::new();
        if let PointEncoder::Learned(h) = &mut self.h {
            v.push(h);
        }
        v.push(&mut self.q);
        v.push(&mut self.g);
        v.push(&mut self.f);
        v
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(TASK);
        c.networks = self.networks().into_iter().map(|(n, net)| (n.to_string(), net.clone())).collect();
        c
    }

    /// Missing `h` means sufficient statistics.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.require_task(TASK)?;
        let h = match c.network("h") {
            Some(net) => PointEncoder::Learned(net.clone()),
            None => PointEncoder::SufficientStats,
        };
        NcpModel::new(h, c.require_network("q")?, c.require_network("g")?, c.require_network("f")?)
    }

    /// Per-point h_i and q_i, plus suffix sums of q.
    pub fn encode_points(&self, points: &PointSet) -> Result<EncodedPoints> {
        EncodedPoints::new(self, points)
    }

    pub fn posterior(&self, points: &PointSet) -> Result<NcpPosterior<'_>> {
        Ok(NcpPosterior::new(self, Arc::new(self.encode_points(points)?)))
    }

    pub fn sample_assignment<R: Rng + ?Sized>(&self, points: &PointSet, rng: &mut R) -> Result<PosteriorSample<Assignment>> {
        sequential::sample_one(&self.posterior(points)?, rng)
    }

    pub fn sample_batch(&self, points: &PointSet, count: usize, seed: u64) -> Result<Vec<PosteriorSample<Assignment>>> {
        if count == 0 {
            return Err(contract("sample count must be at least 1"));
        }
        sequential::sample_batch(&self.posterior(points)?, count, seed)
    }

    pub fn beam_search(&self, points: &PointSet, beam_width: usize) -> Result<Vec<PosteriorSample<Assignment>>> {
        sequential::beam_search(&self.posterior(points)?, beam_width)
    }

    /// p_θ(c_{m+1} | c_{1:m} = prefix, x) where m = prefix.len().
    pub fn conditional_given_prefix(&self, points: &PointSet, prefix: &[usize]) -> Result<Vec<f64>> {
        if prefix.len() >= points.len() {
            return Err(contract("prefix must leave at least one point unassigned"));
        }
        crate::assignment::check_canonical(prefix)?;
        let enc = Arc::new(self.encode_points(points)?);
        let mut state = ClusterState::new(self, enc);
        for &c in prefix {
            state.advance(self, c)?;
        }
        conditional_probs(self, &state)
    }

    /// log p_θ(labels | x) by chaining conditionals.
    pub fn log_prob(&self, points: &PointSet, labels: &Assignment) -> Result<f64> {
        if labels.len() != points.len() {
            return Err(contract("label count differs from point count"));
        }
        sequential::log_prob_of(&self.posterior(points)?, labels)
    }
}
