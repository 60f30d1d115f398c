use std::collections::HashMap;

use crate::assignment::Assignment;
use crate::error::{contract, Result};

fn choose2(v: u64) -> f64 {
    (v * v.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index (Hubert–Arabie). Identical partitions score 1,
/// including the degenerate case where both are a single cluster and the
/// usual formula is 0/0.
pub fn adjusted_rand_index(a: &Assignment, b: &Assignment) -> Result<f64> {
    if a.len() != b.len() {
        return Err(contract("partitions have different lengths"));
    }
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    for (x, y) in a.labels().iter().zip(b.labels()) {
        *table.entry((*x, *y)).or_default() += 1;
    }
    let sum_ij: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = a.cluster_sizes().iter().map(|&v| choose2(v as u64)).sum();
    let sum_b: f64 = b.cluster_sizes().iter().map(|&v| choose2(v as u64)).sum();
    let total = choose2(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-300 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((sum_ij - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(v: &[usize]) -> Assignment {
        Assignment::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_and_relabeled() {
        assert_eq!(adjusted_rand_index(&a(&[0, 0, 1, 1, 2]), &a(&[0, 0, 1, 1, 2])).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a(&[0, 0, 0]), &a(&[0, 0, 0])).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a(&[0, 1, 2]), &a(&[0, 1, 2])).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_value() {
        // contingency [[2,0],[1,1]]: Σ C(n_ij,2)=1, rows 1+1... a=[0,0,1,1], b=[0,0,0,1]
        // sum_a = 2, sum_b = 3, total = 6, expected = 1, max = 2.5 → (1-1)/(1.5) = 0
        assert_eq!(adjusted_rand_index(&a(&[0, 0, 1, 1]), &a(&[0, 0, 0, 1])).unwrap(), 0.0);
        // a=[0,0,0,1,1,1], b=[0,0,1,1,2,2]: Σ_ij = 1+0+0+1 = 2, sum_a = 6, sum_b = 3, total 15
        // expected 1.2, max 4.5 → 0.8/3.3
        let v = adjusted_rand_index(&a(&[0, 0, 0, 1, 1, 1]), &a(&[0, 0, 1, 1, 2, 2])).unwrap();
        assert!((v - 0.8 / 3.3).abs() < 1e-12);
    }
}
