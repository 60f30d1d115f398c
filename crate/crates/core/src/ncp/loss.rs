use super::state::encode_h;
use super::{NcpModel, PointEncoder};
use crate::assignment::Assignment;
use crate::error::{contract, Error, Result};
use crate::factor;
use crate::generative::PointSet;
use crate::math::log_softmax;
use crate::nn::GradientAccumulator;

/// Gradients for the four networks; `h` is `None` under sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NcpGrads {
    pub h: Option<GradientAccumulator>,
    pub q: GradientAccumulator,
    pub g: GradientAccumulator,
    pub f: GradientAccumulator,
}

impl NcpGrads {
    pub fn zeros(model: &NcpModel) -> Self {
        NcpGrads {
            h: match &model.h {
                PointEncoder::Learned(n) => Some(n.zero_grad()),
                PointEncoder::SufficientStats => None,
            },
            q: model.q.zero_grad(),
            g: model.g.zero_grad(),
            f: model.f.zero_grad(),
        }
    }

    /// Blocks in the order of [`NcpModel::networks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        if let Some(h) = &self.h {
            v.push(h.as_slice());
        }
        v.extend([self.q.as_slice(), self.g.as_slice(), self.f.as_slice()]);
        v
    }
}

/// −Σ_{n≥2} log p_θ(c_n | c_{1:n−1}, x), teacher-forced.
pub fn nll_loss(model: &NcpModel, points: &PointSet, truth: &Assignment) -> Result<f64> {
    Ok(run(model, std::slice::from_ref(points), truth, false)?.0)
}

pub fn nll_loss_and_grads(model: &NcpModel, points: &PointSet, truth: &Assignment) -> Result<(f64, NcpGrads)> {
    let (loss, grads) = run(model, std::slice::from_ref(points), truth, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

/// Mean loss and mean gradients over datasets that share one label vector.
/// All replicas go through the networks as one batch.
pub fn nll_loss_and_grads_replicas(
    model: &NcpModel,
    replicas: &[PointSet],
    truth: &Assignment,
) -> Result<(f64, NcpGrads)> {
    let (loss, grads) = run(model, replicas, truth, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

fn run(model: &NcpModel, replicas: &[PointSet], truth: &Assignment, want_grads: bool) -> Result<(f64, Option<NcpGrads>)> {
    let rows = replicas.len();
    if rows == 0 {
        return Err(contract("at least one dataset is required"));
    }
    let n = truth.len();
    let d_x = model.d_x();
    for p in replicas {
        if p.len() != n {
            return Err(contract(format!("dataset has {} points but {} labels", p.len(), n)));
        }
        if p.dim() != d_x {
            return Err(contract(format!("points have dimension {}, model expects {d_x}", p.dim())));
        }
    }
    let (d_h, d_q) = (model.d_h(), model.d_q());
    let c = truth.labels();

    // stacked rows r·N + i
    let mut flat = Vec::with_capacity(rows * n * d_x);
    for p in replicas {
        flat.extend_from_slice(p.as_flat());
    }
    let stacked = PointSet::new(d_x, flat)?;
    let (h_all, h_trace) = match (&model.h, want_grads) {
        (PointEncoder::Learned(net), true) => {
            let (o, t) = net.forward_traced(stacked.as_flat(), rows * n)?;
            (o, Some(t))
        }
        _ => (encode_h(&model.h, &stacked)?, None),
    };
    let (q_all, q_trace) = if want_grads {
        let (o, t) = model.q.forward_traced(stacked.as_flat(), rows * n)?;
        (o, Some(t))
    } else {
        (model.q.forward_batch(stacked.as_flat(), rows * n)?, None)
    };
    // suffix[(r·(N+1) + j)·d_q] = Σ_{i≥j} q_{r,i}
    let mut suffix = vec![0.0; rows * (n + 1) * d_q];
    for r in 0..rows {
        for i in (0..n).rev() {
            for j in 0..d_q {
                suffix[(r * (n + 1) + i) * d_q + j] =
                    suffix[(r * (n + 1) + i + 1) * d_q + j] + q_all[(r * n + i) * d_q + j];
            }
        }
    }

    let mut grads = want_grads.then(|| NcpGrads::zeros(model));
    let mut dq_all = vec![0.0; if want_grads { rows * n * d_q } else { 0 }];
    let mut dh_all = vec![0.0; if want_grads { rows * n * d_h } else { 0 }];
    let mut dq_running = vec![0.0; rows * d_q];
    // acc[k] accumulates ∂/∂H_k over steps; snap[i] is acc[c_i] right after
    // point i joined, so point i only receives later steps' cotangents
    let mut acc: Vec<f64> = Vec::new();
    let mut snap = vec![0.0; if want_grads { n * rows * d_h } else { 0 }];

    let block = rows * d_h;
    let mut sums: Vec<f64> = Vec::new();
    let mut k = 0usize;
    let mut loss = vec![0.0; rows];
    let mut h_new = vec![0.0; block];
    let mut q_sum = vec![0.0; rows * d_q];
    for step in 0..n {
        for r in 0..rows {
            h_new[r * d_h..(r + 1) * d_h].copy_from_slice(&h_all[(r * n + step) * d_h..(r * n + step + 1) * d_h]);
        }
        if step > 0 {
            for r in 0..rows {
                let at = (r * (n + 1) + step + 1) * d_q;
                q_sum[r * d_q..(r + 1) * d_q].copy_from_slice(&suffix[at..at + d_q]);
            }
            let fwd = factor::forward(&model.g, &model.f, &sums, &h_new, &q_sum, rows, k, want_grads)?;
            let opts = k + 1;
            let mut d_logits = vec![0.0; rows * opts];
            for r in 0..rows {
                let lp = log_softmax(&fwd.logits[r * opts..(r + 1) * opts]);
                let term = -lp[c[step]];
                if !term.is_finite() {
                    return Err(Error::Numerical {
                        step: step + 1,
                        detail: format!("non-finite loss term, logits {:?}", &fwd.logits[r * opts..(r + 1) * opts]),
                    });
                }
                loss[r] += term;
                if want_grads {
                    for kk in 0..opts {
                        let target = if kk == c[step] { 1.0 } else { 0.0 };
                        d_logits[r * opts + kk] = (lp[kk].exp() - target) / rows as f64;
                    }
                }
            }
            if let Some(gr) = grads.as_mut() {
                let cot = factor::backward(&model.g, &model.f, &fwd, &d_logits, &mut gr.g, &mut gr.f)?;
                for (a, b) in dq_running.iter_mut().zip(&cot.d_q) {
                    *a += b;
                }
                if step + 1 < n {
                    for r in 0..rows {
                        dq_all[(r * n + step + 1) * d_q..(r * n + step + 2) * d_q]
                            .copy_from_slice(&dq_running[r * d_q..(r + 1) * d_q]);
                    }
                }
                for r in 0..rows {
                    let dst = &mut dh_all[(r * n + step) * d_h..(r * n + step + 1) * d_h];
                    for (a, b) in dst.iter_mut().zip(&cot.d_h_new[r * d_h..(r + 1) * d_h]) {
                        *a += b;
                    }
                }
                for (a, b) in acc.iter_mut().zip(&cot.d_sums) {
                    *a += b;
                }
            }
        }
        let ci = c[step];
        if ci == k {
            sums.extend_from_slice(&h_new);
            if want_grads {
                acc.extend(std::iter::repeat(0.0).take(block));
            }
            k += 1;
        } else {
            for (a, b) in sums[ci * block..(ci + 1) * block].iter_mut().zip(&h_new) {
                *a += b;
            }
        }
        if want_grads {
            snap[step * block..(step + 1) * block].copy_from_slice(&acc[ci * block..(ci + 1) * block]);
        }
    }

    let mean_loss = loss.iter().sum::<f64>() / rows as f64;
    let Some(mut gr) = grads else {
        return Ok((mean_loss, None));
    };
    if n > 1 {
        model
            .q
            .backward_traced(q_trace.as_ref().expect("traced"), &dq_all, &mut gr.q, false)?;
        if let (PointEncoder::Learned(net), Some(trace), Some(gh)) = (&model.h, h_trace.as_ref(), gr.h.as_mut()) {
            for i in 0..n {
                let ci = c[i];
                for r in 0..rows {
                    for j in 0..d_h {
                        dh_all[(r * n + i) * d_h + j] +=
                            acc[ci * block + r * d_h + j] - snap[i * block + r * d_h + j];
                    }
                }
            }
            net.backward_traced(trace, &dh_all, gh, false)?;
        }
    }
    Ok((mean_loss, Some(gr)))
}
