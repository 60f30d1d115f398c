//! Neural Block Process: community detection on ±1 adjacency matrices.
//! Each row is summarized by count statistics that respect the column
//! symmetries induced by the current assignments, then clustered with the
//! same factor as the point model.

mod counts;
mod loss;
mod state;
mod step;
mod train;

pub use counts::BlockCounts;
pub use loss::{nbp_nll, nbp_nll_and_grads, nbp_nll_and_grads_replicas, NbpGrads};
pub use state::{NbpPosterior, NbpState};
pub use train::{draw_graph_minibatch, train_nbp};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::checkpoint::Checkpoint;
use crate::error::{contract, Result};
use crate::generative::Adjacency;
use crate::nn::{Network, NetworkSpec};
use crate::sequential::{self, PosteriorSample};

pub const TASK: &str = "nbp";

/// Width of a row statistic r_{i,k}.
pub const R_WIDTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbpArch {
    pub t: Vec<usize>,
    pub h: Vec<usize>,
    pub q: Vec<usize>,
    pub g: Vec<usize>,
    pub f: Vec<usize>,
}

impl NbpArch {
    /// Full-size networks.
    pub fn standard() -> Self {
        NbpArch {
            t: vec![6, 64, 64, 64, 256],
            h: vec![262, 64, 64, 64, 256],
            q: vec![262, 64, 64, 64, 256],
            g: vec![256, 64, 64, 64, 256],
            f: vec![512, 64, 64, 64, 64, 1],
        }
    }

    /// Same depth, hidden widths 32 and embeddings 64.
    pub fn reduced() -> Self {
        NbpArch {
            t: vec![6, 32, 32, 32, 64],
            h: vec![70, 32, 32, 32, 64],
            q: vec![70, 32, 32, 32, 64],
            g: vec![64, 32, 32, 32, 64],
            f: vec![128, 32, 32, 32, 32, 1],
        }
    }

    /// Tiny widths for tests.
    pub fn toy(width: usize) -> Self {
        NbpArch {
            t: vec![6, width, width],
            h: vec![width + 6, width, width],
            q: vec![width + 6, width, width],
            g: vec![width, width, width],
            f: vec![2 * width, width, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbpModel {
    pub t: Network,
    pub h: Network,
    pub q: Network,
    pub g: Network,
    pub f: Network,
}

impl NbpModel {
    pub fn new(t: Network, h: Network, q: Network, g: Network, f: Network) -> Result<Self> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(contract(what.to_string())) };
        check(t.input_width() == R_WIDTH, "t must read 6-dimensional row statistics")?;
        let d_u = t.output_width() + R_WIDTH;
        check(h.input_width() == d_u, "h input width must be d_t + 6")?;
        check(q.input_width() == d_u, "q input width must be d_t + 6")?;
        check(g.input_width() == h.output_width(), "g input width must equal d_h")?;
        check(f.input_width() == g.output_width() + q.output_width(), "f input width must equal d_g + d_q")?;
        check(f.output_width() == 1, "f must output a single logit")?;
        Ok(NbpModel { t, h, q, g, f })
    }

    pub fn init<R: Rng + ?Sized>(arch: &NbpArch, rng: &mut R) -> Result<Self> {
        let mut net = |w: &Vec<usize>| -> Result<Network> { Network::init(NetworkSpec::new(w.clone())?, rng) };
        let (t, h, q, g, f) = (net(&arch.t)?, net(&arch.h)?, net(&arch.q)?, net(&arch.g)?, net(&arch.f)?);
        NbpModel::new(t, h, q, g, f)
    }

    pub fn d_t(&self) -> usize {
        self.t.output_width()
    }

    pub fn networks(&self) -> Vec<(&'static str, &Network)> {
        vec![("t", &self.t), ("h", &self.h), ("q", &self.q), ("g", &self.g), ("f", &self.f)]
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Network> {
        vec![&mut self.t, &mut self.h, &mut self.q, &mut self.g, &mut self.f]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(TASK);
        c.networks = self.networks().into_iter().map(|(n, net)| (n.to_string(), net.clone())).collect();
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.require_task(TASK)?;
        NbpModel::new(
            c.require_network("t")?,
            c.require_network("h")?,
            c.require_network("q")?,
            c.require_network("g")?,
            c.require_network("f")?,
        )
    }

    /// Per-row (t_i, r_{i,K+1}) for the rows of `counts`, layout `[i][d_t + 6]`.
    pub fn encode_rows(&self, counts: &BlockCounts) -> Result<Vec<f64>> {
        step::encode_rows(self, counts)
    }

    pub fn posterior(&self, adj: &Adjacency) -> Result<NbpPosterior<'_>> {
        NbpPosterior::new(self, Arc::new(adj.clone()))
    }

    pub fn sample_assignment<R: Rng + ?Sized>(&self, adj: &Adjacency, rng: &mut R) -> Result<PosteriorSample<Assignment>> {
        sequential::sample_one(&self.posterior(adj)?, rng)
    }

    pub fn sample_batch(&self, adj: &Adjacency, count: usize, seed: u64) -> Result<Vec<PosteriorSample<Assignment>>> {
        if count == 0 {
            return Err(contract("sample count must be at least 1"));
        }
        sequential::sample_batch(&self.posterior(adj)?, count, seed)
    }

    pub fn beam_search(&self, adj: &Adjacency, beam_width: usize) -> Result<Vec<PosteriorSample<Assignment>>> {
        sequential::beam_search(&self.posterior(adj)?, beam_width)
    }

    pub fn log_prob(&self, adj: &Adjacency, labels: &Assignment) -> Result<f64> {
        if labels.len() != adj.n() {
            return Err(contract("label count differs from the number of rows"));
        }
        sequential::log_prob_of(&self.posterior(adj)?, labels)
    }
}

#[cfg(test)]
mod tests;
