//! The clustering factor shared by the cluster, community and tracking
//! models: given per-cluster sums H_k, the candidate encoding h_n and the
//! unassigned summary Q, option k scores
//!
//!   f(G_k, Q),  G_k = Σ_{j≠k} g(H_j) + g(H_k + h_n),  H_{K+1} = 0.
//!
//! Everything is batched over `rows` independent replicas. Layouts:
//! sums `[k][r][d_h]`, h_n `[r][d_h]`, Q `[r][d_q]`, logits `[r][k]`.

use crate::error::{contract, Result};
use crate::nn::{GradientAccumulator, Network, Trace};

pub(crate) struct FactorForward {
    rows: usize,
    k: usize,
    d_h: usize,
    d_g: usize,
    d_q: usize,
    g_h: Option<Trace>,
    g_u: Option<Trace>,
    f: Option<Trace>,
    /// `[r][option]`, K+1 options per row.
    pub logits: Vec<f64>,
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn forward(
    g: &Network,
    f: &Network,
    sums: &[f64],
    h_new: &[f64],
    q_sum: &[f64],
    rows: usize,
    k: usize,
    traced: bool,
) -> Result<FactorForward> {
    let d_h = g.input_width();
    let d_g = g.output_width();
    let d_q = f.input_width().checked_sub(d_g).unwrap_or(0);
    if sums.len() != k * rows * d_h || h_new.len() != rows * d_h || q_sum.len() != rows * d_q {
        return Err(contract("factor: input shapes do not match the networks"));
    }
    let opts = k + 1;

    let (g_h_out, g_h_trace) = if k == 0 {
        (Vec::new(), None)
    } else if traced {
        let (o, t) = g.forward_traced(sums, k * rows)?;
        (o, Some(t))
    } else {
        (g.forward_batch(sums, k * rows)?, None)
    };

    // option inputs H_k + h_n, and h_n alone for the new cluster
    let mut u = Vec::with_capacity(opts * rows * d_h);
    for kk in 0..k {
        for r in 0..rows {
            let base = (kk * rows + r) * d_h;
            u.extend(sums[base..base + d_h].iter().zip(&h_new[r * d_h..(r + 1) * d_h]).map(|(a, b)| a + b));
        }
    }
    u.extend_from_slice(h_new);
    let (g_u_out, g_u_trace) = if traced {
        let (o, t) = g.forward_traced(&u, opts * rows)?;
        (o, Some(t))
    } else {
        (g.forward_batch(&u, opts * rows)?, None)
    };

    let mut total = vec![0.0; rows * d_g];
    for kk in 0..k {
        for r in 0..rows {
            add_into(&mut total[r * d_g..(r + 1) * d_g], &g_h_out[(kk * rows + r) * d_g..(kk * rows + r + 1) * d_g]);
        }
    }

    let width = d_g + d_q;
    let mut fin = vec![0.0; opts * rows * width];
    for kk in 0..opts {
        for r in 0..rows {
            let row = &mut fin[(kk * rows + r) * width..(kk * rows + r + 1) * width];
            let (gk, qk) = row.split_at_mut(d_g);
            gk.copy_from_slice(&total[r * d_g..(r + 1) * d_g]);
            if kk < k {
                let gh = &g_h_out[(kk * rows + r) * d_g..(kk * rows + r + 1) * d_g];
                for (a, b) in gk.iter_mut().zip(gh) {
                    *a -= b;
                }
            }
            add_into(gk, &g_u_out[(kk * rows + r) * d_g..(kk * rows + r + 1) * d_g]);
            qk.copy_from_slice(&q_sum[r * d_q..(r + 1) * d_q]);
        }
    }
    let (f_out, f_trace) = if traced {
        let (o, t) = f.forward_traced(&fin, opts * rows)?;
        (o, Some(t))
    } else {
        (f.forward_batch(&fin, opts * rows)?, None)
    };
    let mut logits = vec![0.0; rows * opts];
    for kk in 0..opts {
        for r in 0..rows {
            logits[r * opts + kk] = f_out[kk * rows + r];
        }
    }
    Ok(FactorForward {
        rows,
        k,
        d_h,
        d_g,
        d_q,
        g_h: g_h_trace,
        g_u: g_u_trace,
        f: f_trace,
        logits,
    })
}

pub(crate) struct FactorCotangents {
    /// `[k][r][d_h]`
    pub d_sums: Vec<f64>,
    /// `[r][d_h]`
    pub d_h_new: Vec<f64>,
    /// `[r][d_q]`
    pub d_q: Vec<f64>,
}

/// Reverse pass of [`forward`] (which must have been traced) for logit
/// cotangents `d_logits` in `[r][option]` layout.
pub(crate) fn backward(
    g: &Network,
    f: &Network,
    fwd: &FactorForward,
    d_logits: &[f64],
    g_grad: &mut GradientAccumulator,
    f_grad: &mut GradientAccumulator,
) -> Result<FactorCotangents> {
    let (rows, k, d_h, d_g, d_q) = (fwd.rows, fwd.k, fwd.d_h, fwd.d_g, fwd.d_q);
    let opts = k + 1;
    let f_trace = fwd.f.as_ref().ok_or_else(|| contract("factor backward needs a traced forward"))?;
    let g_u_trace = fwd.g_u.as_ref().expect("traced");
    if d_logits.len() != rows * opts {
        return Err(contract("factor backward: cotangent shape mismatch"));
    }
    let mut d_out = vec![0.0; opts * rows];
    for kk in 0..opts {
        for r in 0..rows {
            d_out[kk * rows + r] = d_logits[r * opts + kk];
        }
    }
    let d_fin = f.backward_traced(f_trace, &d_out, f_grad, true)?.expect("input gradient");
    let width = d_g + d_q;

    // dG_k flows to every g(H_j) (through the total), minus to g(H_k), and to g(U_k)
    let mut d_total = vec![0.0; rows * d_g];
    let mut d_q_sum = vec![0.0; rows * d_q];
    let mut d_gu = vec![0.0; opts * rows * d_g];
    let mut d_gh = vec![0.0; k * rows * d_g];
    for kk in 0..opts {
        for r in 0..rows {
            let row = &d_fin[(kk * rows + r) * width..(kk * rows + r + 1) * width];
            let (dg, dq) = row.split_at(d_g);
            add_into(&mut d_total[r * d_g..(r + 1) * d_g], dg);
            add_into(&mut d_q_sum[r * d_q..(r + 1) * d_q], dq);
            d_gu[(kk * rows + r) * d_g..(kk * rows + r + 1) * d_g].copy_from_slice(dg);
            if kk < k {
                let dst = &mut d_gh[(kk * rows + r) * d_g..(kk * rows + r + 1) * d_g];
                for (a, b) in dst.iter_mut().zip(dg) {
                    *a -= b;
                }
            }
        }
    }
    for kk in 0..k {
        for r in 0..rows {
            add_into(&mut d_gh[(kk * rows + r) * d_g..(kk * rows + r + 1) * d_g], &d_total[r * d_g..(r + 1) * d_g]);
        }
    }

    let d_u = g.backward_traced(g_u_trace, &d_gu, g_grad, true)?.expect("input gradient");
    let mut d_sums = if k > 0 {
        let t = fwd.g_h.as_ref().expect("traced");
        g.backward_traced(t, &d_gh, g_grad, true)?.expect("input gradient")
    } else {
        Vec::new()
    };
    let mut d_h_new = vec![0.0; rows * d_h];
    for kk in 0..opts {
        for r in 0..rows {
            let src = &d_u[(kk * rows + r) * d_h..(kk * rows + r + 1) * d_h];
            add_into(&mut d_h_new[r * d_h..(r + 1) * d_h], src);
            if kk < k {
                add_into(&mut d_sums[(kk * rows + r) * d_h..(kk * rows + r + 1) * d_h], src);
            }
        }
    }
    Ok(FactorCotangents {
        d_sums,
        d_h_new,
        d_q: d_q_sum,
    })
}
