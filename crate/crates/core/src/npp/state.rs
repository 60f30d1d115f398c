use std::sync::Arc;

use super::{write_features, NppModel};
use crate::assignment::Permutation;
use crate::error::{contract, Result};
use crate::generative::PointSet;
use crate::math::log_softmax;
use crate::sequential::{check_finite, SequentialPosterior};

/// g(x_j), g(y_i), suffix sums of g(y) and the pair log-density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPairs {
    n: usize,
    d_g: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
    gy_suffix: Vec<f64>,
    log_pair: Vec<f64>,
}

impl EncodedPairs {
    pub fn new(model: &NppModel, x: &PointSet, y: &PointSet) -> Result<Self> {
        if x.len() != y.len() {
            return Err(contract(format!("{} x's but {} y's", x.len(), y.len())));
        }
        if x.dim() != model.d_x() || y.dim() != model.d_x() {
            return Err(contract(format!("points must have dimension {}", model.d_x())));
        }
        let n = x.len();
        let d_g = model.d_g();
        let gx = model.g.forward_batch(x.as_flat(), n)?;
        let gy = model.g.forward_batch(y.as_flat(), n)?;
        let log_pair = model.pair_log_matrix(x, y)?;
        Ok(Self::from_parts(n, d_g, gx, gy, log_pair))
    }

    pub(crate) fn from_parts(n: usize, d_g: usize, gx: Vec<f64>, gy: Vec<f64>, log_pair: Vec<f64>) -> Self {
        let mut gy_suffix = vec![0.0; (n + 1) * d_g];
        for i in (0..n).rev() {
            for j in 0..d_g {
                gy_suffix[i * d_g + j] = gy_suffix[(i + 1) * d_g + j] + gy[i * d_g + j];
            }
        }
        EncodedPairs { n, d_g, gx, gy, gy_suffix, log_pair }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gx(&self, j: usize) -> &[f64] {
        &self.gx[j * self.d_g..(j + 1) * self.d_g]
    }

    pub fn gy(&self, i: usize) -> &[f64] {
        &self.gy[i * self.d_g..(i + 1) * self.d_g]
    }

    /// Σ_{i≥from} g(y_i).
    pub fn gy_from(&self, from: usize) -> &[f64] {
        let from = from.min(self.n);
        &self.gy_suffix[from * self.d_g..(from + 1) * self.d_g]
    }

    /// log p(x_j, y_i).
    pub fn log_pair(&self, i: usize, j: usize) -> f64 {
        self.log_pair[i * self.n + j]
    }

    /// Σ of g(x_j) over `available`, which must be sorted.
    pub(crate) fn sum_gx(&self, available: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; self.d_g];
        for &j in available {
            for (a, b) in s.iter_mut().zip(self.gx(j)) {
                *a += b;
            }
        }
        s
    }
}

/// Matched prefix, sorted available x-indices, and the sums of g over the
/// unmatched x's and y's.
#[derive(Debug, Clone)]
pub struct MatchState {
    enc: Arc<EncodedPairs>,
    matched: Vec<usize>,
    available: Vec<usize>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl MatchState {
    pub fn new(enc: Arc<EncodedPairs>) -> Self {
        let available: Vec<usize> = (0..enc.len()).collect();
        let gx = enc.sum_gx(&available);
        let gy = enc.gy_from(0).to_vec();
        MatchState { enc, matched: Vec::new(), available, gx, gy }
    }

    /// y's matched so far.
    pub fn n(&self) -> usize {
        self.matched.len()
    }

    pub fn matched(&self) -> &[usize] {
        &self.matched
    }

    pub fn available(&self) -> &[usize] {
        &self.available
    }

    pub fn g_x(&self) -> &[f64] {
        &self.gx
    }

    pub fn g_y(&self) -> &[f64] {
        &self.gy
    }

    /// Logits over `available` for the next y.
    pub fn logits(&self, model: &NppModel) -> Result<Vec<f64>> {
        let m = self.available.len();
        if m == 0 {
            return Err(contract("no unmatched x is left"));
        }
        if m == 1 {
            return Ok(vec![0.0]);
        }
        let n = self.n();
        let d = self.enc.d_g;
        let gy_rest: Vec<f64> = self.gy.iter().zip(self.enc.gy(n)).map(|(a, b)| a - b).collect();
        let mut feats = vec![0.0; m * 3 * d];
        let mut gx_rest = vec![0.0; d];
        for (o, &j) in self.available.iter().enumerate() {
            for ((r, a), b) in gx_rest.iter_mut().zip(&self.gx).zip(self.enc.gx(j)) {
                *r = a - b;
            }
            write_features(&gx_rest, &gy_rest, &mut feats[o * 3 * d..(o + 1) * 3 * d]);
        }
        let r = model.r.forward_batch(&feats, m)?;
        Ok(self
            .available
            .iter()
            .zip(r)
            .map(|(&j, rv)| self.enc.log_pair(n, j) + rv)
            .collect())
    }

    /// Match the next y to `available[option]`.
    pub fn advance(&mut self, option: usize) -> Result<()> {
        if option >= self.available.len() {
            return Err(contract(format!("option {option} out of range 0..{}", self.available.len())));
        }
        let j = self.available.remove(option);
        self.matched.push(j);
        self.gx = self.enc.sum_gx(&self.available);
        self.gy = self.enc.gy_from(self.n()).to_vec();
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NppPosterior<'a> {
    model: &'a NppModel,
    enc: Arc<EncodedPairs>,
}

impl<'a> NppPosterior<'a> {
    pub fn new(model: &'a NppModel, enc: Arc<EncodedPairs>) -> Self {
        NppPosterior { model, enc }
    }

    pub fn encoded(&self) -> &Arc<EncodedPairs> {
        &self.enc
    }

    /// Probabilities over the available x's.
    pub fn conditional_probs(&self, state: &MatchState) -> Result<Vec<f64>> {
        Ok(self.log_conditionals(state)?.iter().map(|v| v.exp()).collect())
    }
}

impl SequentialPosterior for NppPosterior<'_> {
    type State = MatchState;
    type Outcome = Permutation;

    fn initial_state(&self) -> Result<MatchState> {
        Ok(MatchState::new(self.enc.clone()))
    }

    fn remaining(&self, state: &MatchState) -> usize {
        state.available.len()
    }

    fn log_conditionals(&self, state: &MatchState) -> Result<Vec<f64>> {
        let logits = state.logits(self.model)?;
        check_finite(state.n() + 1, &logits)?;
        Ok(log_softmax(&logits))
    }

    fn advance(&self, state: &mut MatchState, option: usize) -> Result<()> {
        state.advance(option)
    }

    fn option_towards(&self, state: &MatchState, target: &Permutation) -> Result<usize> {
        let j = *target
            .as_slice()
            .get(state.n())
            .ok_or_else(|| contract("target is shorter than the dataset"))?;
        state
            .available
            .iter()
            .position(|&a| a == j)
            .ok_or_else(|| contract(format!("x {j} is already matched")))
    }

    fn outcome(&self, state: &MatchState) -> Permutation {
        Permutation::new(state.matched.clone()).expect("matches are distinct by construction")
    }
}
