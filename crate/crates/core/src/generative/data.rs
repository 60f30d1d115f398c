use serde::{Deserialize, Serialize};

use crate::assignment::{Assignment, Permutation};
use crate::error::{contract, Result};

/// `n` points of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(contract(format!(
                "point data of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(PointSet { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(contract("ragged point rows"));
        }
        PointSet::new(dim.max(1), rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// New position j holds old point `order[j]`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.point(i));
        }
        PointSet { dim: self.dim, data }
    }
}

/// Symmetric ±1 adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    data: Vec<i8>,
}

impl Adjacency {
    pub fn new(n: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != n * n {
            return Err(contract(format!("adjacency needs {} entries, got {}", n * n, data.len())));
        }
        if let Some(pos) = data.iter().position(|&v| v != 1 && v != -1) {
            return Err(contract(format!(
                "adjacency entry ({}, {}) is {}, expected ±1",
                pos / n,
                pos % n,
                data[pos]
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(contract(format!("adjacency not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Adjacency { n, data })
    }

    /// Column permutations break symmetry, so this skips the symmetry check.
    pub fn new_unchecked_symmetry(n: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != n * n || data.iter().any(|&v| v != 1 && v != -1) {
            return Err(contract("adjacency must be n×n with ±1 entries"));
        }
        Ok(Adjacency { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Simultaneous row/column reordering: new index j is old `order[j]`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let n = self.n;
        let mut data = vec![0i8; n * n];
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                data[a * n + b] = self.get(i, j);
            }
        }
        Adjacency { n, data }
    }

    /// Reorders columns only.
    pub fn columns_reordered(&self, order: &[usize]) -> Self {
        let n = self.n;
        let mut data = vec![0i8; n * n];
        for i in 0..n {
            for (b, &j) in order.iter().enumerate() {
                data[i * n + b] = self.get(i, j);
            }
        }
        Adjacency { n, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LabeledDataset {
    Clustering {
        points: PointSet,
        truth: Option<Assignment>,
    },
    Graph {
        adjacency: Adjacency,
        truth: Option<Assignment>,
    },
    Pairs {
        x: PointSet,
        y: PointSet,
        /// `truth[i]` is the x-index paired with y_i.
        truth: Option<Permutation>,
    },
    Particles {
        timestamps: Vec<usize>,
        points: PointSet,
        truth: Option<Assignment>,
    },
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        match self {
            LabeledDataset::Clustering { points, .. } | LabeledDataset::Particles { points, .. } => points.len(),
            LabeledDataset::Graph { adjacency, .. } => adjacency.n(),
            LabeledDataset::Pairs { y, .. } => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LabeledDataset::Clustering { .. } => "clustering",
            LabeledDataset::Graph { .. } => "graph",
            LabeledDataset::Pairs { .. } => "pairs",
            LabeledDataset::Particles { .. } => "particles",
        }
    }

    pub fn cluster_truth(&self) -> Option<&Assignment> {
        match self {
            LabeledDataset::Clustering { truth, .. }
            | LabeledDataset::Graph { truth, .. }
            | LabeledDataset::Particles { truth, .. } => truth.as_ref(),
            LabeledDataset::Pairs { .. } => None,
        }
    }
}
