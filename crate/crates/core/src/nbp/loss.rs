use super::{step, BlockCounts, NbpModel};
use crate::assignment::Assignment;
use crate::error::{contract, Error, Result};
use crate::generative::Adjacency;
use crate::math::log_softmax;
use crate::nn::GradientAccumulator;

#[derive(Debug, Clone, PartialEq)]
pub struct NbpGrads {
    pub t: GradientAccumulator,
    pub h: GradientAccumulator,
    pub q: GradientAccumulator,
    pub g: GradientAccumulator,
    pub f: GradientAccumulator,
}

impl NbpGrads {
    pub fn zeros(model: &NbpModel) -> Self {
        NbpGrads {
            t: model.t.zero_grad(),
            h: model.h.zero_grad(),
            q: model.q.zero_grad(),
            g: model.g.zero_grad(),
            f: model.f.zero_grad(),
        }
    }

    /// Blocks in the order of [`NbpModel::networks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        vec![self.t.as_slice(), self.h.as_slice(), self.q.as_slice(), self.g.as_slice(), self.f.as_slice()]
    }
}

pub fn nbp_nll(model: &NbpModel, adj: &Adjacency, truth: &Assignment) -> Result<f64> {
    Ok(run(model, &[adj.clone()], truth, false)?.0)
}

pub fn nbp_nll_and_grads(model: &NbpModel, adj: &Adjacency, truth: &Assignment) -> Result<(f64, NbpGrads)> {
    let (l, g) = run(model, &[adj.clone()], truth, true)?;
    Ok((l, g.expect("gradients requested")))
}

/// Mean loss and gradients over graphs that share the label vector `truth`.
pub fn nbp_nll_and_grads_replicas(model: &NbpModel, graphs: &[Adjacency], truth: &Assignment) -> Result<(f64, NbpGrads)> {
    let (l, g) = run(model, graphs, truth, true)?;
    Ok((l, g.expect("gradients requested")))
}

fn run(model: &NbpModel, graphs: &[Adjacency], truth: &Assignment, want_grads: bool) -> Result<(f64, Option<NbpGrads>)> {
    let reps = graphs.len();
    if reps == 0 {
        return Err(contract("at least one graph is required"));
    }
    let n = truth.len();
    if graphs.iter().any(|a| a.n() != n) {
        return Err(contract("every graph must have one row per label"));
    }
    let mut counts = graphs
        .iter()
        .map(|a| BlockCounts::compute(a, &[]))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = want_grads.then(|| NbpGrads::zeros(model));
    let mut loss = vec![0.0; reps];
    for (step_n, &target) in truth.labels().iter().enumerate() {
        if step_n > 0 {
            let refs: Vec<&BlockCounts> = counts.iter().collect();
            let fwd = step::forward(model, &refs, want_grads)?;
            let opts = counts[0].num_clusters() + 1;
            let mut d_logits = vec![0.0; reps * opts];
            for r in 0..reps {
                let logits = &fwd.logits()[r * opts..(r + 1) * opts];
                let lp = log_softmax(logits);
                if !lp[target].is_finite() {
                    return Err(Error::Numerical {
                        step: step_n + 1,
                        detail: format!("non-finite loss term, logits {logits:?}"),
                    });
                }
                loss[r] -= lp[target];
                for o in 0..opts {
                    let onehot = if o == target { 1.0 } else { 0.0 };
                    d_logits[r * opts + o] = (lp[o].exp() - onehot) / reps as f64;
                }
            }
            if let Some(g) = grads.as_mut() {
                step::backward(
                    model,
                    &fwd,
                    &d_logits,
                    step::StepGrads { t: &mut g.t, h: &mut g.h, q: &mut g.q, g: &mut g.g, f: &mut g.f },
                )?;
            }
        }
        for (c, a) in counts.iter_mut().zip(graphs) {
            c.assign(a, target)?;
        }
    }
    Ok((loss.iter().sum::<f64>() / reps as f64, grads))
}
