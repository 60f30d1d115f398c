use std::sync::Arc;

use super::{step, BlockCounts, NbpModel};
use crate::assignment::Assignment;
use crate::error::{contract, Result};
use crate::generative::Adjacency;
use crate::math::log_softmax;
use crate::sequential::{check_finite, SequentialPosterior};

#[derive(Debug, Clone)]
pub struct NbpState {
    adj: Arc<Adjacency>,
    counts: BlockCounts,
}

impl NbpState {
    pub fn new(adj: Arc<Adjacency>) -> Result<Self> {
        let counts = BlockCounts::compute(&adj, &[])?;
        Ok(NbpState { adj, counts })
    }

    pub fn n(&self) -> usize {
        self.counts.num_assigned()
    }

    pub fn counts(&self) -> &BlockCounts {
        &self.counts
    }

    pub fn labels(&self) -> &[usize] {
        self.counts.labels()
    }

    /// Logits over the K existing clusters and a new one.
    pub fn logits(&self, model: &NbpModel) -> Result<Vec<f64>> {
        let n = self.n();
        if n >= self.counts.n() {
            return Err(contract("every row is already assigned"));
        }
        if n == 0 {
            return Ok(vec![0.0]);
        }
        Ok(step::forward(model, &[&self.counts], false)?.logits().to_vec())
    }

    pub fn advance(&mut self, k: usize) -> Result<()> {
        self.counts.assign(&self.adj, k)
    }
}

#[derive(Debug, Clone)]
pub struct NbpPosterior<'a> {
    model: &'a NbpModel,
    adj: Arc<Adjacency>,
}

impl<'a> NbpPosterior<'a> {
    pub fn new(model: &'a NbpModel, adj: Arc<Adjacency>) -> Result<Self> {
        // validates the entries
        BlockCounts::compute(&adj, &[])?;
        Ok(NbpPosterior { model, adj })
    }

    pub fn conditional_probs(&self, state: &NbpState) -> Result<Vec<f64>> {
        Ok(self.log_conditionals(state)?.iter().map(|v| v.exp()).collect())
    }

    /// State after teacher-forcing `prefix`.
    pub fn state_after(&self, prefix: &[usize]) -> Result<NbpState> {
        let mut s = self.initial_state()?;
        for &c in prefix {
            s.advance(c)?;
        }
        Ok(s)
    }
}

impl SequentialPosterior for NbpPosterior<'_> {
    type State = NbpState;
    type Outcome = Assignment;

    fn initial_state(&self) -> Result<NbpState> {
        NbpState::new(self.adj.clone())
    }

    fn remaining(&self, state: &NbpState) -> usize {
        state.counts.n() - state.n()
    }

    fn log_conditionals(&self, state: &NbpState) -> Result<Vec<f64>> {
        let logits = state.logits(self.model)?;
        check_finite(state.n() + 1, &logits)?;
        Ok(log_softmax(&logits))
    }

    fn advance(&self, state: &mut NbpState, option: usize) -> Result<()> {
        state.advance(option)
    }

    fn option_towards(&self, state: &NbpState, target: &Assignment) -> Result<usize> {
        target
            .labels()
            .get(state.n())
            .copied()
            .ok_or_else(|| contract("target is shorter than the dataset"))
    }

    fn outcome(&self, state: &NbpState) -> Assignment {
        Assignment::new(state.labels().to_vec()).expect("labels are canonical by construction")
    }
}
