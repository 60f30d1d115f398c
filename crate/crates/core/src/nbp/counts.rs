use crate::error::{contract, Result};
use crate::generative::Adjacency;

/// Per-row counts of +1 / −1 entries in the columns of each cluster. Column
/// group `K` (the last one) holds the unassigned columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCounts {
    n: usize,
    labels: Vec<usize>,
    /// `[i][k]` for k in 0..=K
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
    sizes: Vec<u32>,
}

impl BlockCounts {
    /// Counts from scratch for canonical labels of the first rows.
    pub fn compute(adj: &Adjacency, labels: &[usize]) -> Result<Self> {
        let n = adj.n();
        if labels.len() > n {
            return Err(contract(format!("{} labels for {n} rows", labels.len())));
        }
        crate::assignment::check_canonical(labels)?;
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let group = |j: usize| if j < labels.len() { labels[j] } else { k };
        let mut plus = vec![vec![0u32; k + 1]; n];
        let mut minus = vec![vec![0u32; k + 1]; n];
        for i in 0..n {
            for j in 0..n {
                match adj.get(i, j) {
                    1 => plus[i][group(j)] += 1,
                    -1 => minus[i][group(j)] += 1,
                    v => return Err(contract(format!("entry ({i}, {j}) is {v}, expected ±1"))),
                }
            }
        }
        let mut sizes = vec![0u32; k + 1];
        for j in 0..n {
            sizes[group(j)] += 1;
        }
        Ok(BlockCounts { n, labels: labels.to_vec(), plus, minus, sizes })
    }

    /// Moves column `n` (the next row) into cluster `k`; `k = K` opens a new one.
    pub fn assign(&mut self, adj: &Adjacency, k: usize) -> Result<()> {
        let col = self.labels.len();
        let kk = self.num_clusters();
        if col >= self.n {
            return Err(contract("every row is already assigned"));
        }
        if k > kk {
            return Err(contract(format!("cluster {k} out of range 0..={kk}")));
        }
        if k == kk {
            for row in self.plus.iter_mut().chain(self.minus.iter_mut()) {
                row.insert(kk, 0);
            }
            self.sizes.insert(kk, 0);
        }
        let un = self.sizes.len() - 1;
        for i in 0..self.n {
            let counts = if adj.get(i, col) == 1 { &mut self.plus[i] } else { &mut self.minus[i] };
            counts[un] -= 1;
            counts[k] += 1;
        }
        self.sizes[un] -= 1;
        self.sizes[k] += 1;
        self.labels.push(k);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_assigned(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len() - 1
    }

    /// s⁺ for row i and group k (k = K is the unassigned group).
    pub fn plus(&self, i: usize, k: usize) -> u32 {
        self.plus[i][k]
    }

    pub fn minus(&self, i: usize, k: usize) -> u32 {
        self.minus[i][k]
    }

    /// Column group sizes; the last entry counts unassigned columns.
    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// Group of row i: its cluster, or K while unassigned.
    pub fn group_of(&self, i: usize) -> usize {
        self.labels.get(i).copied().unwrap_or(self.num_clusters())
    }

    /// r_{i,k} = (s⁺, m⁺, v⁺, s⁻, m⁻, v⁻) for every row and group, layout
    /// `[i][k][6]`. m and v are the mean and population variance of the
    /// counts over the rows in row i's own group.
    pub fn row_features(&self) -> Vec<f64> {
        let groups = self.sizes.len();
        // per (row group, column group): Σ s, Σ s² over member rows
        let mut acc = vec![[0.0f64; 4]; groups * groups];
        let mut members = vec![0usize; groups];
        for i in 0..self.n {
            let a = self.group_of(i);
            members[a] += 1;
            for k in 0..groups {
                let (p, m) = (self.plus[i][k] as f64, self.minus[i][k] as f64);
                let e = &mut acc[a * groups + k];
                e[0] += p;
                e[1] += p * p;
                e[2] += m;
                e[3] += m * m;
            }
        }
        let mut out = vec![0.0; self.n * groups * 6];
        for i in 0..self.n {
            let a = self.group_of(i);
            let s = members[a] as f64;
            for k in 0..groups {
                let e = &acc[a * groups + k];
                let (mp, mm) = (e[0] / s, e[2] / s);
                let r = &mut out[(i * groups + k) * 6..(i * groups + k + 1) * 6];
                r[0] = self.plus[i][k] as f64;
                r[1] = mp;
                r[2] = variance(e[0], e[1], s);
                r[3] = self.minus[i][k] as f64;
                r[4] = mm;
                r[5] = variance(e[2], e[3], s);
            }
        }
        out
    }
}

/// Population variance from Σx and Σx² of small integers. The numerator is
/// an exact integer, so equal counts give exactly zero.
fn variance(sum: f64, sum_sq: f64, count: f64) -> f64 {
    (count * sum_sq - sum * sum) / (count * count)
}
