use crate::assignment::{Assignment, Permutation};
use crate::error::{Error, Result};

pub const PARTITION_LIMIT: usize = 12;
pub const PERMUTATION_LIMIT: usize = 8;

/// Bell numbers via the Bell triangle.
pub fn bell_number(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().expect("nonempty")];
        for v in &row {
            let last = *next.last().expect("nonempty");
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// All canonical label vectors of length n in lexicographic order
/// (restricted growth strings).
pub fn enumerate_partitions(n: usize) -> Result<Vec<Assignment>> {
    if n > PARTITION_LIMIT {
        return Err(Error::Guard { what: "partition enumeration", n, limit: PARTITION_LIMIT });
    }
    if n == 0 {
        return Ok(vec![Assignment::new(Vec::new())?]);
    }
    let mut out = Vec::with_capacity(bell_number(n) as usize);
    let mut labels = vec![0usize; n];
    // max_prefix[i] = max(labels[..i])
    let mut max_prefix = vec![0usize; n];
    loop {
        out.push(Assignment::new(labels.clone())?);
        // rightmost position that can still be incremented
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if labels[i] <= max_prefix[i] {
                break;
            }
            i -= 1;
        }
        labels[i] += 1;
        for j in i + 1..n {
            labels[j] = 0;
            max_prefix[j] = max_prefix[j - 1].max(labels[j - 1]);
        }
    }
}

/// All permutations of 0..n in lexicographic order.
pub fn enumerate_permutations(n: usize) -> Result<Vec<Permutation>> {
    if n > PERMUTATION_LIMIT {
        return Err(Error::Guard { what: "permutation enumeration", n, limit: PERMUTATION_LIMIT });
    }
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        out.push(Permutation::new(p.clone())?);
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return Ok(out);
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}
