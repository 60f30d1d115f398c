use super::{pair_rows, NppModel, PairDensity};
use crate::assignment::Permutation;
use crate::error::{contract, Error, Result};
use crate::generative::PointSet;
use crate::math::log_softmax;
use crate::nn::GradientAccumulator;

#[derive(Debug, Clone, PartialEq)]
pub struct NppGrads {
    pub g: GradientAccumulator,
    pub r: GradientAccumulator,
    pub density: Option<GradientAccumulator>,
}

impl NppGrads {
    pub fn zeros(model: &NppModel) -> Self {
        NppGrads {
            g: model.g.zero_grad(),
            r: model.r.zero_grad(),
            density: match &model.density {
                PairDensity::Learned(n) => Some(n.zero_grad()),
                PairDensity::Gaussian { .. } => None,
            },
        }
    }

    /// Blocks in the order of [`NppModel::networks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v = vec![self.g.as_slice(), self.r.as_slice()];
        if let Some(d) = &self.density {
            v.push(d.as_slice());
        }
        v
    }
}

/// One labeled pair dataset.
pub struct PairsExample<'a> {
    pub x: &'a PointSet,
    pub y: &'a PointSet,
    pub truth: &'a Permutation,
}

pub fn npp_nll(model: &NppModel, x: &PointSet, y: &PointSet, truth: &Permutation) -> Result<f64> {
    Ok(run(model, &[PairsExample { x, y, truth }], false)?.0)
}

pub fn npp_nll_and_grads(model: &NppModel, x: &PointSet, y: &PointSet, truth: &Permutation) -> Result<(f64, NppGrads)> {
    let (l, g) = run(model, &[PairsExample { x, y, truth }], true)?;
    Ok((l, g.expect("gradients requested")))
}

/// Mean loss and gradients over same-size datasets, batched through the networks.
pub fn npp_nll_and_grads_replicas(model: &NppModel, batch: &[(PointSet, PointSet, Permutation)]) -> Result<(f64, NppGrads)> {
    let ex: Vec<PairsExample> = batch.iter().map(|(x, y, t)| PairsExample { x, y, truth: t }).collect();
    let (l, g) = run(model, &ex, true)?;
    Ok((l, g.expect("gradients requested")))
}

fn run(model: &NppModel, batch: &[PairsExample], want_grads: bool) -> Result<(f64, Option<NppGrads>)> {
    let reps = batch.len();
    if reps == 0 {
        return Err(contract("at least one dataset is required"));
    }
    let n = batch[0].truth.len();
    let d_x = model.d_x();
    for e in batch {
        if e.x.len() != n || e.y.len() != n || e.truth.len() != n {
            return Err(contract("all datasets in a batch must have the same size"));
        }
        if e.x.dim() != d_x || e.y.dim() != d_x {
            return Err(contract(format!("points must have dimension {d_x}")));
        }
    }
    let d = model.d_g();

    // g over [x_0..x_{N−1}, y_0..y_{N−1}] per replica
    let mut flat = Vec::with_capacity(reps * 2 * n * d_x);
    for e in batch {
        flat.extend_from_slice(e.x.as_flat());
        flat.extend_from_slice(e.y.as_flat());
    }
    let (g_out, g_trace) = if want_grads {
        let (o, t) = model.g.forward_traced(&flat, reps * 2 * n)?;
        (o, Some(t))
    } else {
        (model.g.forward_batch(&flat, reps * 2 * n)?, None)
    };
    let gx = |r: usize, j: usize| &g_out[(r * 2 * n + j) * d..(r * 2 * n + j + 1) * d];
    let gy = |r: usize, i: usize| &g_out[(r * 2 * n + n + i) * d..(r * 2 * n + n + i + 1) * d];

    let mut pair_rows_all = Vec::new();
    let mut log_pair = Vec::with_capacity(reps * n * n);
    let mut density_trace = None;
    match &model.density {
        PairDensity::Gaussian { prior_var, noise_var } => {
            for e in batch {
                log_pair.extend(crate::diagnostics::pair_log_matrix(e.x, e.y, *prior_var, *noise_var)?);
            }
        }
        PairDensity::Learned(net) => {
            for e in batch {
                pair_rows_all.extend(pair_rows(e.x, e.y));
            }
            if want_grads {
                let (o, t) = net.forward_traced(&pair_rows_all, reps * n * n)?;
                log_pair = o;
                density_trace = Some(t);
            } else {
                log_pair = net.forward_batch(&pair_rows_all, reps * n * n)?;
            }
        }
    }

    let mut grads = want_grads.then(|| NppGrads::zeros(model));
    let mut d_g_out = vec![0.0; if want_grads { reps * 2 * n * d } else { 0 }];
    let mut d_log_pair = vec![0.0; if want_grads { reps * n * n } else { 0 }];
    let mut dgy_running = vec![0.0; reps * d];

    let mut available: Vec<Vec<usize>> = vec![(0..n).collect(); reps];
    let mut loss = vec![0.0; reps];
    for step in 0..n.saturating_sub(1) {
        let m = n - step;
        let mut feats = vec![0.0; reps * m * 3 * d];
        let mut gx_rest_all = vec![0.0; reps * m * d];
        let mut gy_rest_all = vec![0.0; reps * d];
        for r in 0..reps {
            let mut gx_sum = vec![0.0; d];
            for &j in &available[r] {
                for (a, b) in gx_sum.iter_mut().zip(gx(r, j)) {
                    *a += b;
                }
            }
            // Σ_{i≥step} g(y_i) − g(y_step), as in the sampling state
            let mut gy_sum = vec![0.0; d];
            for i in (step..n).rev() {
                for (a, b) in gy_sum.iter_mut().zip(gy(r, i)) {
                    *a += b;
                }
            }
            let gy_rest = &mut gy_rest_all[r * d..(r + 1) * d];
            for ((o, a), b) in gy_rest.iter_mut().zip(&gy_sum).zip(gy(r, step)) {
                *o = a - b;
            }
            for (o, &j) in available[r].iter().enumerate() {
                let row = r * m + o;
                let gx_rest = &mut gx_rest_all[row * d..(row + 1) * d];
                for ((t, a), b) in gx_rest.iter_mut().zip(&gx_sum).zip(gx(r, j)) {
                    *t = a - b;
                }
                super::write_features(gx_rest, &gy_rest_all[r * d..(r + 1) * d], &mut feats[row * 3 * d..(row + 1) * 3 * d]);
            }
        }
        let (r_out, r_trace) = if want_grads {
            let (o, t) = model.r.forward_traced(&feats, reps * m)?;
            (o, Some(t))
        } else {
            (model.r.forward_batch(&feats, reps * m)?, None)
        };
        let mut d_r = vec![0.0; reps * m];
        let mut targets = vec![0usize; reps];
        for r in 0..reps {
            let logits: Vec<f64> = available[r]
                .iter()
                .enumerate()
                .map(|(o, &j)| log_pair[r * n * n + step * n + j] + r_out[r * m + o])
                .collect();
            let lp = log_softmax(&logits);
            let want = batch[r].truth.as_slice()[step];
            let t = available[r]
                .iter()
                .position(|&j| j == want)
                .ok_or_else(|| contract("truth is not a permutation"))?;
            targets[r] = t;
            if !lp[t].is_finite() {
                return Err(Error::Numerical {
                    step: step + 1,
                    detail: format!("non-finite loss term, logits {logits:?}"),
                });
            }
            loss[r] -= lp[t];
            if want_grads {
                for o in 0..m {
                    let onehot = if o == t { 1.0 } else { 0.0 };
                    let dl = (lp[o].exp() - onehot) / reps as f64;
                    d_r[r * m + o] = dl;
                    let j = available[r][o];
                    d_log_pair[r * n * n + step * n + j] += dl;
                }
            }
        }
        if let Some(gr) = grads.as_mut() {
            let d_feat = model
                .r
                .backward_traced(r_trace.as_ref().expect("traced"), &d_r, &mut gr.r, true)?
                .expect("input gradient");
            for r in 0..reps {
                let mut da_total = vec![0.0; d];
                let mut db_total = vec![0.0; d];
                let mut da_rows = vec![0.0; m * d];
                let b = &gy_rest_all[r * d..(r + 1) * d];
                for o in 0..m {
                    let row = r * m + o;
                    let a = &gx_rest_all[row * d..(row + 1) * d];
                    let f = &d_feat[row * 3 * d..(row + 1) * 3 * d];
                    for k in 0..d {
                        let diff = a[k] - b[k];
                        let da = f[k] + f[d + k] * b[k] + 2.0 * f[2 * d + k] * diff;
                        let db = f[k] + f[d + k] * a[k] - 2.0 * f[2 * d + k] * diff;
                        da_rows[o * d + k] = da;
                        da_total[k] += da;
                        db_total[k] += db;
                    }
                }
                // a_o = Σ_{j∈A} g(x_j) − g(x_{A[o]})
                for (o, &j) in available[r].iter().enumerate() {
                    let dst = &mut d_g_out[(r * 2 * n + j) * d..(r * 2 * n + j + 1) * d];
                    for k in 0..d {
                        dst[k] += da_total[k] - da_rows[o * d + k];
                    }
                }
                // b = Σ_{i>step} g(y_i)
                for k in 0..d {
                    dgy_running[r * d + k] += db_total[k];
                }
                let i = step + 1;
                let dst = &mut d_g_out[(r * 2 * n + n + i) * d..(r * 2 * n + n + i + 1) * d];
                dst.copy_from_slice(&dgy_running[r * d..(r + 1) * d]);
            }
        }
        for r in 0..reps {
            available[r].remove(targets[r]);
        }
    }

    let mean = loss.iter().sum::<f64>() / reps as f64;
    let Some(mut gr) = grads else {
        return Ok((mean, None));
    };
    if n > 1 {
        model
            .g
            .backward_traced(g_trace.as_ref().expect("traced"), &d_g_out, &mut gr.g, false)?;
        if let (PairDensity::Learned(net), Some(t), Some(gd)) = (&model.density, density_trace.as_ref(), gr.density.as_mut()) {
            net.backward_traced(t, &d_log_pair, gd, false)?;
        }
    }
    Ok((mean, Some(gr)))
}
