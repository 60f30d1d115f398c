use std::cell::{Cell, RefCell};
use std::sync::Arc;

use super::{NcpModel, PointEncoder};
use crate::assignment::Assignment;
use crate::error::{contract, Result};
use crate::generative::PointSet;
use crate::math::{log_softmax, softmax};
use crate::sequential::{check_finite, SequentialPosterior};

/// Per-point encodings h_i, q_i and the suffix sums Σ_{i≥j} q_i.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPoints {
    n: usize,
    d_h: usize,
    d_q: usize,
    h: Vec<f64>,
    q: Vec<f64>,
    q_suffix: Vec<f64>,
}

impl EncodedPoints {
    pub(crate) fn new(model: &NcpModel, points: &PointSet) -> Result<Self> {
        if points.dim() != model.d_x() {
            return Err(contract(format!(
                "points have dimension {}, model expects {}",
                points.dim(),
                model.d_x()
            )));
        }
        let n = points.len();
        let h = encode_h(&model.h, points)?;
        let q = model.q.forward_batch(points.as_flat(), n)?;
        Ok(Self::from_parts(n, model.d_h(), model.d_q(), h, q))
    }

    pub(crate) fn from_parts(n: usize, d_h: usize, d_q: usize, h: Vec<f64>, q: Vec<f64>) -> Self {
        let mut q_suffix = vec![0.0; (n + 1) * d_q];
        for i in (0..n).rev() {
            for j in 0..d_q {
                q_suffix[i * d_q + j] = q_suffix[(i + 1) * d_q + j] + q[i * d_q + j];
            }
        }
        EncodedPoints { n, d_h, d_q, h, q, q_suffix }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self, i: usize) -> &[f64] {
        &self.h[i * self.d_h..(i + 1) * self.d_h]
    }

    pub fn q(&self, i: usize) -> &[f64] {
        &self.q[i * self.d_q..(i + 1) * self.d_q]
    }

    /// Σ_{i≥j} q_i; zero for j ≥ N.
    pub fn q_from(&self, j: usize) -> &[f64] {
        let j = j.min(self.n);
        &self.q_suffix[j * self.d_q..(j + 1) * self.d_q]
    }
}

pub(crate) fn encode_h(h: &PointEncoder, points: &PointSet) -> Result<Vec<f64>> {
    Ok(match h {
        PointEncoder::SufficientStats => {
            let mut out = Vec::with_capacity(points.len() * (points.dim() + 1));
            for p in points.iter() {
                out.push(1.0);
                out.extend_from_slice(p);
            }
            out
        }
        PointEncoder::Learned(net) => net.forward_batch(points.as_flat(), points.len())?,
    })
}

/// Incremental sampling state: per-cluster sums H_k and cached g(H_k).
/// Each query costs K+1 evaluations of g; the chosen option's g output is
/// reused by [`ClusterState::advance`]. G = Σ_k g(H_k) is re-summed from the
/// cache in label order on every query, so no rounding drift accumulates.
#[derive(Debug, Clone)]
pub struct ClusterState {
    enc: Arc<EncodedPoints>,
    labels: Vec<usize>,
    sums: Vec<Vec<f64>>,
    d_g: usize,
    g_sums: Vec<Vec<f64>>,
    pending: RefCell<Option<(usize, Vec<Vec<f64>>)>>,
    g_evals: Cell<usize>,
}

impl ClusterState {
    pub fn new(model: &NcpModel, enc: Arc<EncodedPoints>) -> Self {
        ClusterState {
            enc,
            labels: Vec::new(),
            sums: Vec::new(),
            g_sums: Vec::new(),
            d_g: model.d_g(),
            pending: RefCell::new(None),
            g_evals: Cell::new(0),
        }
    }

    /// Points assigned so far.
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.sums.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cluster_sums(&self) -> &[Vec<f64>] {
        &self.sums
    }

    /// G = Σ_k g(H_k).
    pub fn g_total(&self) -> Vec<f64> {
        sum_rows(&self.g_sums, self.d_g)
    }

    /// Σ of q over the points not yet assigned.
    pub fn unassigned_sum(&self) -> &[f64] {
        self.enc.q_from(self.n())
    }

    pub fn encoded(&self) -> &EncodedPoints {
        &self.enc
    }

    /// Rows pushed through g since construction.
    pub fn g_evaluations(&self) -> usize {
        self.g_evals.get()
    }

    /// Logits for the next point over the K+1 options.
    pub fn logits(&self, model: &NcpModel) -> Result<Vec<f64>> {
        let n = self.n();
        if n >= self.enc.len() {
            return Err(contract("all points are already assigned"));
        }
        if n == 0 {
            return Ok(vec![0.0]);
        }
        let k = self.num_clusters();
        let d_h = self.enc.d_h;
        let d_g = model.d_g();
        let d_q = model.d_q();
        let h_n = self.enc.h(n);
        let mut u = Vec::with_capacity((k + 1) * d_h);
        for s in &self.sums {
            u.extend(s.iter().zip(h_n).map(|(a, b)| a + b));
        }
        u.extend_from_slice(h_n);
        let gu = model.g.forward_batch(&u, k + 1)?;
        self.g_evals.set(self.g_evals.get() + k + 1);

        let q = self.enc.q_from(n + 1);
        let total = self.g_total();
        let width = d_g + d_q;
        let mut fin = vec![0.0; (k + 1) * width];
        for kk in 0..=k {
            let row = &mut fin[kk * width..(kk + 1) * width];
            for j in 0..d_g {
                let old = if kk < k { self.g_sums[kk][j] } else { 0.0 };
                row[j] = total[j] - old + gu[kk * d_g + j];
            }
            row[d_g..].copy_from_slice(q);
        }
        let logits = model.f.forward_batch(&fin, k + 1)?;
        let outs = gu.chunks(d_g).map(|c| c.to_vec()).collect();
        *self.pending.borrow_mut() = Some((n, outs));
        Ok(logits)
    }

    /// Assign the next point to cluster `c` (`c = K` opens a new one).
    pub fn advance(&mut self, model: &NcpModel, c: usize) -> Result<()> {
        let n = self.n();
        let k = self.num_clusters();
        if n >= self.enc.len() {
            return Err(contract("all points are already assigned"));
        }
        if c > k {
            return Err(contract(format!("label {c} out of range 0..={k}")));
        }
        let h_n = self.enc.h(n);
        let new_sum: Vec<f64> = if c < k {
            self.sums[c].iter().zip(h_n).map(|(a, b)| a + b).collect()
        } else {
            h_n.to_vec()
        };
        let cached = match self.pending.borrow_mut().take() {
            Some((at, mut outs)) if at == n => Some(std::mem::take(&mut outs[c])),
            _ => None,
        };
        let g_new = match cached {
            Some(v) => v,
            None => {
                self.g_evals.set(self.g_evals.get() + 1);
                model.g.forward(&new_sum)?
            }
        };
        if c < k {
            self.sums[c] = new_sum;
            self.g_sums[c] = g_new;
        } else {
            self.sums.push(new_sum);
            self.g_sums.push(g_new);
        }
        self.labels.push(c);
        Ok(())
    }
}

/// Σ of equal-length rows in order, starting from zeros.
pub(crate) fn sum_rows(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut total = vec![0.0; width];
    for r in rows {
        for (a, b) in total.iter_mut().zip(r) {
            *a += b;
        }
    }
    total
}

/// Probabilities over the K+1 options for the next point. Leaves the
/// state's observable fields unchanged.
pub fn conditional_probs(model: &NcpModel, state: &ClusterState) -> Result<Vec<f64>> {
    let logits = state.logits(model)?;
    check_finite(state.n() + 1, &logits)?;
    Ok(softmax(&logits))
}

/// A dataset bound to a model.
#[derive(Debug, Clone)]
pub struct NcpPosterior<'a> {
    model: &'a NcpModel,
    enc: Arc<EncodedPoints>,
}

impl<'a> NcpPosterior<'a> {
    pub fn new(model: &'a NcpModel, enc: Arc<EncodedPoints>) -> Self {
        NcpPosterior { model, enc }
    }
}

impl SequentialPosterior for NcpPosterior<'_> {
    type State = ClusterState;
    type Outcome = Assignment;

    fn initial_state(&self) -> Result<ClusterState> {
        Ok(ClusterState::new(self.model, self.enc.clone()))
    }

    fn remaining(&self, state: &ClusterState) -> usize {
        self.enc.len() - state.n()
    }

    fn log_conditionals(&self, state: &ClusterState) -> Result<Vec<f64>> {
        let logits = state.logits(self.model)?;
        check_finite(state.n() + 1, &logits)?;
        Ok(log_softmax(&logits))
    }

    fn advance(&self, state: &mut ClusterState, option: usize) -> Result<()> {
        state.advance(self.model, option)
    }

    fn option_towards(&self, state: &ClusterState, target: &Assignment) -> Result<usize> {
        target
            .labels()
            .get(state.n())
            .copied()
            .ok_or_else(|| contract("target is shorter than the dataset"))
    }

    fn outcome(&self, state: &ClusterState) -> Assignment {
        Assignment::new(state.labels.clone()).expect("labels are canonical by construction")
    }
}
