use super::{sigmoid, NptModel};
use crate::assignment::Assignment;
use crate::error::{contract, Error, Result};
use crate::factor;
use crate::generative::PointSet;
use crate::math::log_softmax;
use crate::ncp::{encode_h, NcpGrads, PointEncoder};

#[derive(Debug, Clone, PartialEq)]
pub struct NptGrads {
    pub ncp: NcpGrads,
    pub decay_raw: f64,
}

impl NptGrads {
    pub fn zeros(model: &NptModel) -> Self {
        NptGrads { ncp: NcpGrads::zeros(&model.ncp), decay_raw: 0.0 }
    }

    /// Network blocks, then decay_raw.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v = self.ncp.blocks();
        v.push(std::slice::from_ref(&self.decay_raw));
        v
    }
}

/// −Σ_{t≥2} log p_θ(c_t | c_{1:t−1}, x), teacher-forced in time order.
pub fn npt_nll(model: &NptModel, points: &PointSet, truth: &Assignment) -> Result<f64> {
    Ok(run(model, std::slice::from_ref(points), truth, false)?.0)
}

pub fn npt_nll_and_grads(model: &NptModel, points: &PointSet, truth: &Assignment) -> Result<(f64, NptGrads)> {
    let (loss, grads) = run(model, std::slice::from_ref(points), truth, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

/// Mean loss and gradients over sequences that share one label vector.
pub fn npt_nll_and_grads_replicas(model: &NptModel, replicas: &[PointSet], truth: &Assignment) -> Result<(f64, NptGrads)> {
    let (loss, grads) = run(model, replicas, truth, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Derivatives with respect to w = e^{−b} ride along as forward recurrences:
// S'_k(t+1) = (S_k + [c_t=k] h_t) + w·S'_k,  D'_j = D_{j+1} + w·D'_{j+1}.
fn run(model: &NptModel, replicas: &[PointSet], truth: &Assignment, want_grads: bool) -> Result<(f64, Option<NptGrads>)> {
    let ncp = &model.ncp;
    let rows = replicas.len();
    if rows == 0 {
        return Err(contract("at least one sequence is required"));
    }
    let n = truth.len();
    let d_x = ncp.d_x();
    for p in replicas {
        if p.len() != n {
            return Err(contract(format!("sequence has {} observations but {} labels", p.len(), n)));
        }
        if p.dim() != d_x {
            return Err(contract(format!("points have dimension {}, model expects {d_x}", p.dim())));
        }
    }
    let (d_h, d_q) = (ncp.d_h(), ncp.d_q());
    let c = truth.labels();
    let w = model.decay_factor();

    let mut flat = Vec::with_capacity(rows * n * d_x);
    for p in replicas {
        flat.extend_from_slice(p.as_flat());
    }
    let stacked = PointSet::new(d_x, flat)?;
    let (h_all, h_trace) = match (&ncp.h, want_grads) {
        (PointEncoder::Learned(net), true) => {
            let (o, t) = net.forward_traced(stacked.as_flat(), rows * n)?;
            (o, Some(t))
        }
        _ => (encode_h(&ncp.h, &stacked)?, None),
    };
    let (q_all, q_trace) = if want_grads {
        let (o, t) = ncp.q.forward_traced(stacked.as_flat(), rows * n)?;
        (o, Some(t))
    } else {
        (ncp.q.forward_batch(stacked.as_flat(), rows * n)?, None)
    };
    // future[(r·(N+1) + j)·d_q] = D_j for replica r; dfuture holds D'_j
    let mut future = vec![0.0; rows * (n + 1) * d_q];
    let mut dfuture = vec![0.0; future.len()];
    for r in 0..rows {
        for i in (0..n).rev() {
            for j in 0..d_q {
                let next = (r * (n + 1) + i + 1) * d_q + j;
                let at = (r * (n + 1) + i) * d_q + j;
                future[at] = w * future[next] + q_all[(r * n + i) * d_q + j];
                dfuture[at] = future[next] + w * dfuture[next];
            }
        }
    }

    let mut grads = want_grads.then(|| NptGrads::zeros(model));
    let mut d_w = 0.0;
    let mut dq_all = vec![0.0; if want_grads { rows * n * d_q } else { 0 }];
    let mut dh_all = vec![0.0; if want_grads { rows * n * d_h } else { 0 }];
    // Σ_{s<t} w^{t−s} ∂/∂Q_s, which is exactly ∂/∂q_t
    let mut dq_carry = vec![0.0; rows * d_q];
    // ∂/∂S_k(t) per step, for the reverse pass into h
    let mut d_sums_at: Vec<Vec<f64>> = Vec::new();

    let block = rows * d_h;
    let mut sums: Vec<f64> = Vec::new();
    let mut sums_dw: Vec<f64> = Vec::new();
    let mut k = 0usize;
    let mut loss = vec![0.0; rows];
    let mut h_new = vec![0.0; block];
    let mut q_sum = vec![0.0; rows * d_q];
    let mut q_sum_dw = vec![0.0; rows * d_q];
    for step in 0..n {
        for r in 0..rows {
            h_new[r * d_h..(r + 1) * d_h].copy_from_slice(&h_all[(r * n + step) * d_h..(r * n + step + 1) * d_h]);
        }
        if want_grads {
            for r in 0..rows {
                dq_all[(r * n + step) * d_q..(r * n + step + 1) * d_q].copy_from_slice(&dq_carry[r * d_q..(r + 1) * d_q]);
            }
        }
        let mut d_q_step = vec![0.0; rows * d_q];
        if step > 0 {
            for r in 0..rows {
                let at = (r * (n + 1) + step + 1) * d_q;
                for j in 0..d_q {
                    q_sum[r * d_q + j] = w * future[at + j];
                    q_sum_dw[r * d_q + j] = future[at + j] + w * dfuture[at + j];
                }
            }
            let fwd = factor::forward(&ncp.g, &ncp.f, &sums, &h_new, &q_sum, rows, k, want_grads)?;
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
                let cot = factor::backward(&ncp.g, &ncp.f, &fwd, &d_logits, &mut gr.ncp.g, &mut gr.ncp.f)?;
                d_w += dot(&cot.d_sums, &sums_dw) + dot(&cot.d_q, &q_sum_dw);
                for r in 0..rows {
                    let dst = &mut dh_all[(r * n + step) * d_h..(r * n + step + 1) * d_h];
                    for (a, b) in dst.iter_mut().zip(&cot.d_h_new[r * d_h..(r + 1) * d_h]) {
                        *a += b;
                    }
                }
                d_q_step = cot.d_q;
                d_sums_at.push(cot.d_sums);
            }
        } else if want_grads {
            d_sums_at.push(Vec::new());
        }
        if want_grads {
            for (a, b) in dq_carry.iter_mut().zip(&d_q_step) {
                *a = w * (*a + b);
            }
        }

        let ci = c[step];
        if ci == k {
            sums.extend(std::iter::repeat(0.0).take(block));
            sums_dw.extend(std::iter::repeat(0.0).take(block));
            k += 1;
        }
        for kk in 0..k {
            let s = &mut sums[kk * block..(kk + 1) * block];
            let sd = &mut sums_dw[kk * block..(kk + 1) * block];
            for i in 0..block {
                let v = if kk == ci { s[i] + h_new[i] } else { s[i] };
                sd[i] = v + w * sd[i];
                s[i] = w * v;
            }
        }
    }

    let mean_loss = loss.iter().sum::<f64>() / rows as f64;
    let Some(mut gr) = grads else {
        return Ok((mean_loss, None));
    };
    if !model.force_zero_decay {
        // dw/draw = −w · softplus'(raw)
        gr.decay_raw = d_w * (-w) * sigmoid(model.decay_raw);
    }
    if n > 1 {
        ncp.q.backward_traced(q_trace.as_ref().expect("traced"), &dq_all, &mut gr.ncp.q, false)?;
        if let (PointEncoder::Learned(net), Some(trace), Some(gh)) = (&ncp.h, h_trace.as_ref(), gr.ncp.h.as_mut()) {
            // e[k] = Σ_{s>t} w^{s−t} ∂/∂S_k(s), swept backwards in time
            let mut e = vec![0.0; k * block];
            for t in (0..n).rev() {
                let ct = c[t];
                for r in 0..rows {
                    for j in 0..d_h {
                        dh_all[(r * n + t) * d_h + j] += e[ct * block + r * d_h + j];
                    }
                }
                let ds = &d_sums_at[t];
                for (i, v) in e.iter_mut().enumerate() {
                    let add = ds.get(i).copied().unwrap_or(0.0);
                    *v = w * (*v + add);
                }
            }
            net.backward_traced(trace, &dh_all, gh, false)?;
        }
    }
    Ok((mean_loss, Some(gr)))
}
