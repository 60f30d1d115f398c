use std::cell::Cell;
use std::sync::Arc;

use super::NptModel;
use crate::assignment::Assignment;
use crate::error::{contract, Result};
use crate::generative::PointSet;
use crate::math::{log_softmax, softmax};
use crate::ncp::{encode_h, sum_rows};
use crate::sequential::{check_finite, SequentialPosterior};

/// Encodings of a time-ordered sequence and the decayed future sums
/// D_j = q_j + w·D_{j+1}, so that Q_t = w·D_{t+1} with w = e^{−b}.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayedPoints {
    n: usize,
    d_h: usize,
    d_q: usize,
    w: f64,
    h: Vec<f64>,
    q: Vec<f64>,
    future: Vec<f64>,
}

impl DecayedPoints {
    pub(crate) fn new(model: &NptModel, points: &PointSet) -> Result<Self> {
        let ncp = &model.ncp;
        if points.dim() != ncp.d_x() {
            return Err(contract(format!(
                "points have dimension {}, model expects {}",
                points.dim(),
                ncp.d_x()
            )));
        }
        let n = points.len();
        let h = encode_h(&ncp.h, points)?;
        let q = ncp.q.forward_batch(points.as_flat(), n)?;
        Ok(Self::from_parts(n, ncp.d_h(), ncp.d_q(), model.decay_factor(), h, q))
    }

    pub(crate) fn from_parts(n: usize, d_h: usize, d_q: usize, w: f64, h: Vec<f64>, q: Vec<f64>) -> Self {
        let mut future = vec![0.0; (n + 1) * d_q];
        for i in (0..n).rev() {
            for j in 0..d_q {
                future[i * d_q + j] = w * future[(i + 1) * d_q + j] + q[i * d_q + j];
            }
        }
        DecayedPoints { n, d_h, d_q, w, h, q, future }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// e^{−b}.
    pub fn decay_factor(&self) -> f64 {
        self.w
    }

    pub fn h(&self, i: usize) -> &[f64] {
        &self.h[i * self.d_h..(i + 1) * self.d_h]
    }

    pub fn q(&self, i: usize) -> &[f64] {
        &self.q[i * self.d_q..(i + 1) * self.d_q]
    }

    /// Q_t = Σ_{t'>t} e^{−b(t'−t)} q_{t'} for the observation at index t.
    pub fn future_summary(&self, t: usize) -> Vec<f64> {
        let j = (t + 1).min(self.n);
        self.future[j * self.d_q..(j + 1) * self.d_q].iter().map(|v| self.w * v).collect()
    }
}

/// Per-cluster decayed sums at the current time. Every earlier observation
/// contributes e^{−b·lag}; the candidate itself enters with weight 1.
/// All K sums change each step, so g(H_k) is re-evaluated on every query.
#[derive(Debug, Clone)]
pub struct DecayedState {
    enc: Arc<DecayedPoints>,
    labels: Vec<usize>,
    sums: Vec<Vec<f64>>,
    g_evals: Cell<usize>,
}

impl DecayedState {
    pub fn new(enc: Arc<DecayedPoints>) -> Self {
        DecayedState {
            enc,
            labels: Vec::new(),
            sums: Vec::new(),
            g_evals: Cell::new(0),
        }
    }

    /// Observations assigned so far; the next one has index t().
    pub fn t(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.sums.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// H_k without the candidate: Σ_{t'<t, c=k} e^{−b(t−t')} h_{t'}.
    pub fn decayed_sums(&self) -> &[Vec<f64>] {
        &self.sums
    }

    pub fn future_summary(&self) -> Vec<f64> {
        self.enc.future_summary(self.t())
    }

    pub fn encoded(&self) -> &DecayedPoints {
        &self.enc
    }

    pub fn g_evaluations(&self) -> usize {
        self.g_evals.get()
    }

    pub fn logits(&self, model: &NptModel) -> Result<Vec<f64>> {
        let ncp = &model.ncp;
        let t = self.t();
        if t >= self.enc.len() {
            return Err(contract("all observations are already assigned"));
        }
        if t == 0 {
            return Ok(vec![0.0]);
        }
        let k = self.num_clusters();
        let (d_g, d_q) = (ncp.d_g(), ncp.d_q());
        let h_t = self.enc.h(t);
        let flat: Vec<f64> = self.sums.concat();
        let g_sums: Vec<Vec<f64>> = ncp.g.forward_batch(&flat, k)?.chunks(d_g).map(|c| c.to_vec()).collect();
        let mut u = Vec::with_capacity((k + 1) * self.enc.d_h);
        for s in &self.sums {
            u.extend(s.iter().zip(h_t).map(|(a, b)| a + b));
        }
        u.extend_from_slice(h_t);
        let gu = ncp.g.forward_batch(&u, k + 1)?;
        self.g_evals.set(self.g_evals.get() + 2 * k + 1);

        let q = self.enc.future_summary(t);
        let total = sum_rows(&g_sums, d_g);
        let width = d_g + d_q;
        let mut fin = vec![0.0; (k + 1) * width];
        for kk in 0..=k {
            let row = &mut fin[kk * width..(kk + 1) * width];
            for j in 0..d_g {
                let old = if kk < k { g_sums[kk][j] } else { 0.0 };
                row[j] = total[j] - old + gu[kk * d_g + j];
            }
            row[d_g..].copy_from_slice(&q);
        }
        ncp.f.forward_batch(&fin, k + 1)
    }

    /// Assign observation t to `c` (`c = K` opens a track) and step time:
    /// H_k ← e^{−b}(H_k + [c = k] h_t).
    pub fn advance(&mut self, c: usize) -> Result<()> {
        let t = self.t();
        let k = self.num_clusters();
        if t >= self.enc.len() {
            return Err(contract("all observations are already assigned"));
        }
        if c > k {
            return Err(contract(format!("label {c} out of range 0..={k}")));
        }
        let w = self.enc.w;
        if c == k {
            self.sums.push(vec![0.0; self.enc.d_h]);
        }
        let h_t = self.enc.h(t);
        for (kk, s) in self.sums.iter_mut().enumerate() {
            if kk == c {
                for (a, b) in s.iter_mut().zip(h_t) {
                    *a = w * (*a + b);
                }
            } else {
                s.iter_mut().for_each(|a| *a *= w);
            }
        }
        self.labels.push(c);
        Ok(())
    }
}

pub fn conditional_probs(model: &NptModel, state: &DecayedState) -> Result<Vec<f64>> {
    let logits = state.logits(model)?;
    check_finite(state.t() + 1, &logits)?;
    Ok(softmax(&logits))
}

#[derive(Debug, Clone)]
pub struct NptPosterior<'a> {
    model: &'a NptModel,
    enc: Arc<DecayedPoints>,
}

impl<'a> NptPosterior<'a> {
    pub fn new(model: &'a NptModel, enc: Arc<DecayedPoints>) -> Self {
        NptPosterior { model, enc }
    }
}

impl SequentialPosterior for NptPosterior<'_> {
    type State = DecayedState;
    type Outcome = Assignment;

    fn initial_state(&self) -> Result<DecayedState> {
        Ok(DecayedState::new(self.enc.clone()))
    }

    fn remaining(&self, state: &DecayedState) -> usize {
        self.enc.len() - state.t()
    }

    fn log_conditionals(&self, state: &DecayedState) -> Result<Vec<f64>> {
        let logits = state.logits(self.model)?;
        check_finite(state.t() + 1, &logits)?;
        Ok(log_softmax(&logits))
    }

    fn advance(&self, state: &mut DecayedState, option: usize) -> Result<()> {
        state.advance(option)
    }

    fn option_towards(&self, state: &DecayedState, target: &Assignment) -> Result<usize> {
        target
            .labels()
            .get(state.t())
            .copied()
            .ok_or_else(|| contract("target is shorter than the sequence"))
    }

    fn outcome(&self, state: &DecayedState) -> Assignment {
        Assignment::new(state.labels.clone()).expect("labels are canonical by construction")
    }
}
