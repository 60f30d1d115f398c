//! Shared training driver: per-iteration seeded minibatch, one Adam step
//! over all parameter blocks, loss log.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub const DEFAULT_REPLICAS: usize = 64;

pub trait Trainable {
    /// Parameter blocks in a fixed order; gradients come back in the same order.
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_len(&mut self) -> usize {
        self.param_blocks_mut().iter().map(|b| b.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub iterations: usize,
    /// Datasets drawn per label vector.
    pub replicas: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Shuffle point order every iteration.
    pub reorder: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iterations: 20_000,
            replicas: DEFAULT_REPLICAS,
            seed: 0,
            adam: AdamConfig::default(),
            reorder: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub losses: Vec<f64>,
    pub seconds: f64,
}

impl TrainingLog {
    /// Trailing moving average; entry i averages losses[i+1−w ..= i].
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        let mut out = Vec::with_capacity(self.losses.len());
        let mut acc = 0.0;
        for (i, l) in self.losses.iter().enumerate() {
            acc += l;
            if i >= w {
                acc -= self.losses[i - w];
            }
            out.push(acc / (i + 1).min(w) as f64);
        }
        out
    }
}

pub type Hook<'a, M> = &'a mut dyn FnMut(usize, f64, &M) -> Result<()>;

/// Runs `opts.iterations` steps. `step` returns the minibatch loss and the
/// gradient blocks; iteration `i` gets the stream `(seed, "train", i)`.
pub fn run<M, S>(model: &mut M, opts: &TrainOptions, mut step: S, hook: Option<Hook<'_, M>>) -> Result<TrainingLog>
where
    M: Trainable,
    S: FnMut(&M, &mut StreamRng) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let start = Instant::now();
    let mut adam = AdamState::new(model.param_len(), opts.adam);
    let mut log = TrainingLog::default();
    let mut hook = hook;
    for it in 0..opts.iterations {
        let mut r = rng::stream(opts.seed, "train", it as u64);
        let (loss, grads) = match step(model, &mut r) {
            Err(Error::Numerical { detail, .. }) => {
                return Err(Error::Divergence { iteration: it + 1, detail })
            }
            other => other?,
        };
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: it + 1,
                detail: format!("loss {loss}"),
            });
        }
        let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        adam.step_blocks(&mut model.param_blocks_mut(), &grad_refs)
            .map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { iteration: it + 1, detail },
                other => other,
            })?;
        log.losses.push(loss);
        if let Some(h) = hook.as_mut() {
            h(it + 1, loss, model)?;
        }
    }
    log.seconds = start.elapsed().as_secs_f64();
    Ok(log)
}
