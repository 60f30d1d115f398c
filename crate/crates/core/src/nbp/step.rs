//! One conditional of the block model, batched over replicas that share a
//! label prefix: row statistics → t → (h, q) → clustering factor.

use super::{BlockCounts, NbpModel, R_WIDTH};
use crate::error::{contract, Result};
use crate::factor::{self, FactorForward};
use crate::nn::{GradientAccumulator, Network, Trace};

pub(crate) struct StepForward {
    reps: usize,
    big_n: usize,
    n: usize,
    k: usize,
    labels: Vec<usize>,
    t: Option<Trace>,
    h: Option<Trace>,
    q: Option<Trace>,
    factor: FactorForward,
}

impl StepForward {
    /// `[r][option]`
    pub fn logits(&self) -> &[f64] {
        &self.factor.logits
    }
}

fn run(net: &Network, input: &[f64], rows: usize, traced: bool) -> Result<(Vec<f64>, Option<Trace>)> {
    if rows == 0 {
        return Ok((Vec::new(), None));
    }
    if traced {
        let (o, t) = net.forward_traced(input, rows)?;
        Ok((o, Some(t)))
    } else {
        Ok((net.forward_batch(input, rows)?, None))
    }
}

/// t inputs `[r][i][k][6]` over assigned groups, and the raw unassigned
/// statistics `[r][i][6]`.
fn gather(counts: &[&BlockCounts]) -> (Vec<f64>, Vec<f64>) {
    let mut t_in = Vec::new();
    let mut raw = Vec::new();
    for c in counts {
        let k = c.num_clusters();
        let feats = c.row_features();
        for i in 0..c.n() {
            let row = &feats[i * (k + 1) * R_WIDTH..(i + 1) * (k + 1) * R_WIDTH];
            t_in.extend_from_slice(&row[..k * R_WIDTH]);
            raw.extend_from_slice(&row[k * R_WIDTH..]);
        }
    }
    (t_in, raw)
}

/// u_i = (Σ_k t(r_{i,k}), r_{i,K+1}) for `reps · n` rows.
fn assemble_u(t_out: &[f64], raw: &[f64], rows: usize, k: usize, d_t: usize) -> Vec<f64> {
    let d_u = d_t + R_WIDTH;
    let mut u = vec![0.0; rows * d_u];
    for row in 0..rows {
        let dst = &mut u[row * d_u..(row + 1) * d_u];
        for kk in 0..k {
            let src = &t_out[(row * k + kk) * d_t..(row * k + kk + 1) * d_t];
            for (a, b) in dst[..d_t].iter_mut().zip(src) {
                *a += b;
            }
        }
        dst[d_t..].copy_from_slice(&raw[row * R_WIDTH..(row + 1) * R_WIDTH]);
    }
    u
}

pub(crate) fn encode_rows(model: &NbpModel, counts: &BlockCounts) -> Result<Vec<f64>> {
    let k = counts.num_clusters();
    let (t_in, raw) = gather(&[counts]);
    let (t_out, _) = run(&model.t, &t_in, counts.n() * k, false)?;
    Ok(assemble_u(&t_out, &raw, counts.n(), k, model.d_t()))
}

/// Logits for the next row of every replica. All `counts` must share the
/// same dataset size and label prefix, with at least one row assigned.
pub(crate) fn forward(model: &NbpModel, counts: &[&BlockCounts], traced: bool) -> Result<StepForward> {
    let reps = counts.len();
    let first = counts.first().ok_or_else(|| contract("no replicas"))?;
    let (big_n, n, k) = (first.n(), first.num_assigned(), first.num_clusters());
    if n == 0 || n >= big_n {
        return Err(contract(format!("conditional needs 1 <= n < N, got n={n}, N={big_n}")));
    }
    if counts.iter().any(|c| c.n() != big_n || c.labels() != first.labels()) {
        return Err(contract("replicas must share size and labels"));
    }
    let labels = first.labels().to_vec();
    let d_t = model.d_t();
    let d_u = d_t + R_WIDTH;
    let (d_h, d_q) = (model.h.output_width(), model.q.output_width());

    let (t_in, raw) = gather(counts);
    let (t_out, t_trace) = run(&model.t, &t_in, reps * big_n * k, traced)?;
    let u = assemble_u(&t_out, &raw, reps * big_n, k, d_t);

    // h on rows 0..=n, q on rows n+1..N
    let (nh, nq) = (n + 1, big_n - n - 1);
    let mut h_in = Vec::with_capacity(reps * nh * d_u);
    let mut q_in = Vec::with_capacity(reps * nq * d_u);
    for r in 0..reps {
        let base = r * big_n * d_u;
        h_in.extend_from_slice(&u[base..base + nh * d_u]);
        q_in.extend_from_slice(&u[base + nh * d_u..base + big_n * d_u]);
    }
    let (h_out, h_trace) = run(&model.h, &h_in, reps * nh, traced)?;
    let (q_out, q_trace) = run(&model.q, &q_in, reps * nq, traced)?;

    let mut sums = vec![0.0; k * reps * d_h];
    let mut h_new = vec![0.0; reps * d_h];
    let mut q_sum = vec![0.0; reps * d_q];
    for r in 0..reps {
        for (i, &c) in labels.iter().enumerate() {
            let dst = &mut sums[(c * reps + r) * d_h..(c * reps + r + 1) * d_h];
            for (a, b) in dst.iter_mut().zip(&h_out[(r * nh + i) * d_h..(r * nh + i + 1) * d_h]) {
                *a += b;
            }
        }
        h_new[r * d_h..(r + 1) * d_h].copy_from_slice(&h_out[(r * nh + n) * d_h..(r * nh + n + 1) * d_h]);
        for i in 0..nq {
            for (a, b) in q_sum[r * d_q..(r + 1) * d_q].iter_mut().zip(&q_out[(r * nq + i) * d_q..(r * nq + i + 1) * d_q]) {
                *a += b;
            }
        }
    }
    let factor = factor::forward(&model.g, &model.f, &sums, &h_new, &q_sum, reps, k, traced)?;
    Ok(StepForward { reps, big_n, n, k, labels, t: t_trace, h: h_trace, q: q_trace, factor })
}

pub(crate) struct StepGrads<'a> {
    pub t: &'a mut GradientAccumulator,
    pub h: &'a mut GradientAccumulator,
    pub q: &'a mut GradientAccumulator,
    pub g: &'a mut GradientAccumulator,
    pub f: &'a mut GradientAccumulator,
}

/// Adds the parameter gradients of Σ d_logits · logits.
pub(crate) fn backward(model: &NbpModel, fwd: &StepForward, d_logits: &[f64], grads: StepGrads<'_>) -> Result<()> {
    let (reps, big_n, n, k) = (fwd.reps, fwd.big_n, fwd.n, fwd.k);
    let d_t = model.d_t();
    let d_u = d_t + R_WIDTH;
    let (d_h, d_q) = (model.h.output_width(), model.q.output_width());
    let cot = factor::backward(&model.g, &model.f, &fwd.factor, d_logits, grads.g, grads.f)?;

    let (nh, nq) = (n + 1, big_n - n - 1);
    let mut d_h_out = vec![0.0; reps * nh * d_h];
    for r in 0..reps {
        for (i, &c) in fwd.labels.iter().enumerate() {
            d_h_out[(r * nh + i) * d_h..(r * nh + i + 1) * d_h]
                .copy_from_slice(&cot.d_sums[(c * reps + r) * d_h..(c * reps + r + 1) * d_h]);
        }
        d_h_out[(r * nh + n) * d_h..(r * nh + n + 1) * d_h].copy_from_slice(&cot.d_h_new[r * d_h..(r + 1) * d_h]);
    }
    let mut d_q_out = vec![0.0; reps * nq * d_q];
    for r in 0..reps {
        for i in 0..nq {
            d_q_out[(r * nq + i) * d_q..(r * nq + i + 1) * d_q].copy_from_slice(&cot.d_q[r * d_q..(r + 1) * d_q]);
        }
    }
    let d_h_in = model
        .h
        .backward_traced(fwd.h.as_ref().expect("traced"), &d_h_out, grads.h, true)?
        .expect("input gradient");
    let d_q_in = match &fwd.q {
        Some(t) => model.q.backward_traced(t, &d_q_out, grads.q, true)?.expect("input gradient"),
        None => Vec::new(),
    };
    if k == 0 {
        return Ok(());
    }
    // every t(r_{i,k}) receives the t-part of d u_i
    let mut d_t_out = vec![0.0; reps * big_n * k * d_t];
    for r in 0..reps {
        for i in 0..big_n {
            let du = if i < nh {
                &d_h_in[(r * nh + i) * d_u..(r * nh + i) * d_u + d_t]
            } else {
                &d_q_in[(r * nq + i - nh) * d_u..(r * nq + i - nh) * d_u + d_t]
            };
            for kk in 0..k {
                let row = (r * big_n + i) * k + kk;
                d_t_out[row * d_t..(row + 1) * d_t].copy_from_slice(du);
            }
        }
    }
    model.t.backward_traced(fwd.t.as_ref().expect("traced"), &d_t_out, grads.t, false)?;
    Ok(())
}
