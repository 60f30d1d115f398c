//! Neural Particle Tracking: the clustering model with exponentially
//! time-decayed cluster and future summaries. Observations arrive one per
//! unit time step, in order.

mod loss;
mod state;
mod train;

pub use loss::{npt_nll, npt_nll_and_grads, npt_nll_and_grads_replicas, NptGrads};
pub use state::{conditional_probs, DecayedPoints, DecayedState, NptPosterior};
pub use train::{draw_track_minibatch, train_npt};

use std::sync::Arc;

use rand::Rng;

use crate::assignment::Assignment;
use crate::checkpoint::Checkpoint;
use crate::error::{contract, Error, Result};
use crate::generative::PointSet;
use crate::ncp::{NcpArch, NcpModel};
use crate::nn::Network;
use crate::sequential::{self, PosteriorSample};

pub const TASK: &str = "npt";
pub const DEFAULT_INITIAL_DECAY: f64 = 0.1;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for b > 0.
pub fn softplus_inverse(b: f64) -> f64 {
    if b > 30.0 {
        b + (-(-b).exp()).ln_1p()
    } else {
        b.exp_m1().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NptModel {
    pub ncp: NcpModel,
    /// b = softplus(decay_raw).
    pub decay_raw: f64,
    /// Debug switch: treat b as exactly 0, which turns the model back into
    /// the undecayed clustering model. Never persisted.
    pub force_zero_decay: bool,
}

impl NptModel {
    pub fn new(ncp: NcpModel, decay_raw: f64) -> Result<Self> {
        if !decay_raw.is_finite() {
            return Err(contract("decay_raw must be finite"));
        }
        Ok(NptModel { ncp, decay_raw, force_zero_decay: false })
    }

    pub fn init<R: Rng + ?Sized>(arch: &NcpArch, initial_decay: f64, rng: &mut R) -> Result<Self> {
        if !(initial_decay > 0.0) || !initial_decay.is_finite() {
            return Err(contract("initial decay must be positive"));
        }
        NptModel::new(NcpModel::init(arch, rng)?, softplus_inverse(initial_decay))
    }

    /// Effective decay b.
    pub fn decay(&self) -> f64 {
        if self.force_zero_decay {
            0.0
        } else {
            softplus(self.decay_raw)
        }
    }

    /// e^{−b}, the weight of a one-step lag.
    pub fn decay_factor(&self) -> f64 {
        if self.force_zero_decay {
            1.0
        } else {
            (-self.decay()).exp()
        }
    }

    pub fn d_x(&self) -> usize {
        self.ncp.d_x()
    }

    pub fn networks(&self) -> Vec<(&'static str, &Network)> {
        self.ncp.networks()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = self.ncp.to_checkpoint();
        c.task = TASK.to_string();
        c.scalars.insert("decay_raw".to_string(), self.decay_raw);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        c.require_task(TASK)?;
        let raw = *c
            .scalars
            .get("decay_raw")
            .ok_or_else(|| Error::Format("npt checkpoint has no decay_raw scalar".into()))?;
        let mut inner = c.clone();
        inner.task = crate::ncp::TASK.to_string();
        NptModel::new(NcpModel::from_checkpoint(&inner)?, raw)
    }

    pub fn encode(&self, points: &PointSet) -> Result<DecayedPoints> {
        DecayedPoints::new(self, points)
    }

    pub fn posterior(&self, points: &PointSet) -> Result<NptPosterior<'_>> {
        Ok(NptPosterior::new(self, Arc::new(self.encode(points)?)))
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

    /// Conditional over the K+1 options at time prefix.len()+1.
    pub fn conditional_given_prefix(&self, points: &PointSet, prefix: &[usize]) -> Result<Vec<f64>> {
        if prefix.len() >= points.len() {
            return Err(contract("prefix must leave at least one observation unassigned"));
        }
        crate::assignment::check_canonical(prefix)?;
        let mut state = DecayedState::new(Arc::new(self.encode(points)?));
        for &c in prefix {
            state.advance(c)?;
        }
        conditional_probs(self, &state)
    }

    pub fn log_prob(&self, points: &PointSet, labels: &Assignment) -> Result<f64> {
        if labels.len() != points.len() {
            return Err(contract("label count differs from observation count"));
        }
        sequential::log_prob_of(&self.posterior(points)?, labels)
    }
}
