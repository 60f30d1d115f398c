//! Cluster and match labels.
//!
//! Labels are stored 0-based internally (`0` is the first cluster); the
//! 1-based convention only appears at the file and JSON boundary.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Canonical cluster labels: first-appearance numbering, so `labels[0] == 0`
/// and each label is at most one more than the running maximum.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Assignment(Vec<usize>);

impl Assignment {
    /// Validates canonical form.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        check_canonical(&labels)?;
        Ok(Assignment(labels))
    }

    /// Relabels any label vector by order of first appearance.
    pub fn canonicalize(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let out = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Assignment(out)
    }

    /// From 1-based canonical labels (file convention).
    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(contract("1-based labels contain 0"));
        }
        Assignment::new(labels.iter().map(|l| l - 1).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|l| l + 1).collect()
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters()];
        for &l in &self.0 {
            sizes[l] += 1;
        }
        sizes
    }

    /// Reorders points by `order` (new position j holds old point `order[j]`)
    /// and re-canonicalizes.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let raw: Vec<usize> = order.iter().map(|&i| self.0[i]).collect();
        Assignment::canonicalize(&raw)
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl TryFrom<Vec<usize>> for Assignment {
    type Error = crate::error::Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Assignment::new(v)
    }
}

impl From<Assignment> for Vec<usize> {
    fn from(a: Assignment) -> Self {
        a.0
    }
}

pub fn check_canonical(labels: &[usize]) -> Result<()> {
    let mut next = 0usize;
    for (i, &l) in labels.iter().enumerate() {
        if l > next {
            return Err(contract(format!(
                "labels not canonical at position {i}: label {l} exceeds next new label {next}"
            )));
        }
        if l == next {
            next += 1;
        }
    }
    Ok(())
}

/// A matching: `perm[i]` is the x-index paired with y_i. Must be a bijection
/// on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(contract(format!(
                    "not a permutation: entry {p} at position {i}"
                )));
            }
        }
        Ok(Permutation(perm))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|l| l + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = crate::error::Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}
