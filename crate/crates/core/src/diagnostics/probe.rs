//! Last-point probe: two clusters of 50 points and a 101st point moved
//! along a horizontal line through both.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::exact_last_point_conditional;
use crate::assignment::Assignment;
use crate::error::Result;
use crate::generative::{GenerativeSpec, PointSet};
use crate::rng;

pub const PROBE_CENTRES: [[f64; 2]; 2] = [[-4.0, 0.0], [4.0, 0.0]];
pub const PROBE_PER_CLUSTER: usize = 50;
pub const PROBE_POSITIONS: usize = 100;
pub const PROBE_RANGE: (f64, f64) = (-16.0, 16.0);
pub const PROBE_Y: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLine {
    /// The 100 fixed points in a shuffled order.
    pub points: PointSet,
    pub labels: Assignment,
    pub xs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub x: f64,
    pub exact: Vec<f64>,
    pub model: Vec<f64>,
}

/// Unit-variance clusters around [`PROBE_CENTRES`], drawn from `seed`.
pub fn probe_line(seed: u64) -> ProbeLine {
    let mut r = rng::stream(seed, "probe", 0);
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    for (k, c) in PROBE_CENTRES.iter().enumerate() {
        for _ in 0..PROBE_PER_CLUSTER {
            let dx: f64 = StandardNormal.sample(&mut r);
            let dy: f64 = StandardNormal.sample(&mut r);
            rows.push(vec![c[0] + dx, c[1] + dy]);
            raw.push(k);
        }
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut r);
    let points = PointSet::from_rows(&order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()).expect("2D rows");
    let labels = Assignment::canonicalize(&order.iter().map(|&i| raw[i]).collect::<Vec<_>>());
    let (lo, hi) = PROBE_RANGE;
    let xs = (0..PROBE_POSITIONS)
        .map(|i| lo + (hi - lo) * i as f64 / (PROBE_POSITIONS - 1) as f64)
        .collect();
    ProbeLine { points, labels, xs }
}

impl ProbeLine {
    pub fn with_probe(&self, x: f64) -> PointSet {
        let mut flat = self.points.as_flat().to_vec();
        flat.extend_from_slice(&[x, PROBE_Y]);
        PointSet::new(2, flat).expect("2D rows")
    }

    /// Exact and model conditionals of the probe's label at every position.
    /// `model` maps (all 101 points, 100-point prefix) to K+1 probabilities.
    pub fn evaluate<F>(&self, spec: &GenerativeSpec, model: F) -> Result<Vec<ProbeRow>>
    where
        F: Fn(&PointSet, &[usize]) -> Result<Vec<f64>>,
    {
        self.xs
            .iter()
            .map(|&x| {
                let pts = self.with_probe(x);
                Ok(ProbeRow {
                    x,
                    exact: exact_last_point_conditional(&pts, self.labels.labels(), spec)?,
                    model: model(&pts, self.labels.labels())?,
                })
            })
            .collect()
    }
}
