//! Sequential posteriors: every model here factorizes p(latent | data) as a
//! product of conditionals over a growing prefix. This module holds the
//! model-independent drivers: iid sampling, seed-split batch sampling,
//! beam search and chained log-probabilities.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A dataset bound to a trained model, exposing one factor at a time.
pub trait SequentialPosterior {
    type State: Clone;
    type Outcome: Clone;

    fn initial_state(&self) -> Result<Self::State>;

    /// Number of factors still to draw.
    fn remaining(&self, state: &Self::State) -> usize;

    /// Log-probabilities over the options of the next factor.
    fn log_conditionals(&self, state: &Self::State) -> Result<Vec<f64>>;

    fn advance(&self, state: &mut Self::State, option: usize) -> Result<()>;

    /// The option that moves `state` towards `target`.
    fn option_towards(&self, state: &Self::State, target: &Self::Outcome) -> Result<usize>;

    fn outcome(&self, state: &Self::State) -> Self::Outcome;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample<L> {
    pub labels: L,
    /// Σ log p_θ(c_n | c_{1:n−1}, x) over the drawn factors.
    pub log_prob: f64,
}

pub(crate) fn check_finite(step: usize, logits: &[f64]) -> Result<()> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            step,
            detail: format!("non-finite logits {logits:?}"),
        });
    }
    Ok(())
}

fn draw<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return k;
        }
    }
    // rounding left a sliver of mass past the last option
    log_probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

pub fn sample_one<P: SequentialPosterior, R: Rng + ?Sized>(
    post: &P,
    rng: &mut R,
) -> Result<PosteriorSample<P::Outcome>> {
    let mut state = post.initial_state()?;
    let mut log_prob = 0.0;
    while post.remaining(&state) > 0 {
        let lp = post.log_conditionals(&state)?;
        let k = draw(&lp, rng);
        log_prob += lp[k];
        post.advance(&mut state, k)?;
    }
    Ok(PosteriorSample {
        labels: post.outcome(&state),
        log_prob,
    })
}

/// `count` iid samples; sample `j` uses the stream derived from
/// `(seed, "sample", j)`, so results do not depend on thread count.
pub fn sample_batch<P>(post: &P, count: usize, seed: u64) -> Result<Vec<PosteriorSample<P::Outcome>>>
where
    P: SequentialPosterior + Sync,
    P::Outcome: Send,
{
    (0..count)
        .into_par_iter()
        .map(|j| sample_one(post, &mut rng::stream(seed, "sample", j as u64)))
        .collect()
}

/// Teacher-forced log p_θ(target) by chaining conditionals.
pub fn log_prob_of<P: SequentialPosterior>(post: &P, target: &P::Outcome) -> Result<f64> {
    let mut state = post.initial_state()?;
    let mut total = 0.0;
    while post.remaining(&state) > 0 {
        let lp = post.log_conditionals(&state)?;
        let k = post.option_towards(&state, target)?;
        total += lp[k];
        post.advance(&mut state, k)?;
    }
    Ok(total)
}

/// Beam search over the sequential factorization. Keeps the `beam_width`
/// best prefixes by cumulative log-probability; ties break by insertion
/// order so results are deterministic.
pub fn beam_search<P: SequentialPosterior>(
    post: &P,
    beam_width: usize,
) -> Result<Vec<PosteriorSample<P::Outcome>>> {
    if beam_width == 0 {
        return Err(crate::error::contract("beam width must be at least 1"));
    }
    let mut beam = vec![(post.initial_state()?, 0.0f64)];
    while post.remaining(&beam[0].0) > 0 {
        let mut candidates = Vec::new();
        for (b, (state, score)) in beam.iter().enumerate() {
            let lp = post.log_conditionals(state)?;
            for (k, l) in lp.iter().enumerate() {
                candidates.push((score + l, b, k));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        candidates.truncate(beam_width);
        let mut next = Vec::with_capacity(candidates.len());
        for (score, b, k) in candidates {
            let mut state = beam[b].0.clone();
            post.advance(&mut state, k)?;
            next.push((state, score));
        }
        beam = next;
    }
    Ok(beam
        .into_iter()
        .map(|(state, log_prob)| PosteriorSample {
            labels: post.outcome(&state),
            log_prob,
        })
        .collect())
}
