//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            config,
        }
    }

    /// One update of `params` in place. Non-finite gradients abort the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.step_blocks(&mut [params], &[grads])
    }

    /// Same as [`AdamState::step`] over several parameter blocks laid end to
    /// end; the moment vectors cover their concatenation.
    pub fn step_blocks(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(contract("adam: parameter and gradient block counts differ"));
        }
        let total: usize = params.iter().map(|p| p.len()).sum();
        if total != self.first_moment.len() {
            return Err(contract(format!(
                "adam: state covers {} parameters, got {}",
                self.first_moment.len(),
                total
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(contract("adam: block length mismatch"));
            }
        }
        let next_step = self.step_count + 1;
        if let Some((block, idx)) = grads
            .iter()
            .enumerate()
            .find_map(|(b, g)| g.iter().position(|v| !v.is_finite()).map(|i| (b, i)))
        {
            return Err(Error::Divergence {
                iteration: next_step as usize,
                detail: format!("non-finite gradient in block {block} at index {idx}"),
            });
        }
        self.step_count = next_step;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let mut at = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            let m = &mut self.first_moment[at..at + p.len()];
            let v = &mut self.second_moment[at..at + p.len()];
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
            at += p.len();
        }
        Ok(())
    }
}
