use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::data::{Adjacency, LabeledDataset, PointSet};
use super::{ParticleSpec, SbmSpec};
use crate::assignment::{Assignment, Permutation};
use crate::error::{Error, Result};

const DIM: usize = 2;

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    std * z
}

/// μ_k ~ N(0, σ_μ²·I₂), x_i ~ N(μ_{c_i}, σ²·I₂). Both arguments are stds.
pub fn sample_gauss2d<R: Rng + ?Sized>(
    labels: &Assignment,
    sigma_mu: f64,
    sigma: f64,
    rng: &mut R,
) -> LabeledDataset {
    let means: Vec<[f64; DIM]> = (0..labels.num_clusters())
        .map(|_| [gaussian(rng, sigma_mu), gaussian(rng, sigma_mu)])
        .collect();
    let mut data = Vec::with_capacity(labels.len() * DIM);
    for &c in labels.labels() {
        for d in 0..DIM {
            data.push(means[c][d] + gaussian(rng, sigma));
        }
    }
    LabeledDataset::Clustering {
        points: PointSet::new(DIM, data).expect("2D data"),
        truth: Some(labels.clone()),
    }
}

/// Block densities φ (K×K, symmetric, row-major), one Beta draw per
/// unordered block pair. With an assortative gap, the diagonal is drawn
/// from the Beta conditioned on min_k φ_kk > gap, then each off-diagonal
/// entry from the Beta truncated to [0, min_k φ_kk − gap], both by
/// rejection. Joint rejection of the whole matrix is hopeless beyond four
/// or five blocks.
pub fn sample_sbm_phi<R: Rng + ?Sized>(k: usize, spec: &SbmSpec, rng: &mut R) -> Result<Vec<f64>> {
    let beta = Beta::new(spec.beta_a, spec.beta_b)
        .map_err(|e| Error::Config(format!("invalid Beta({}, {}): {e}", spec.beta_a, spec.beta_b)))?;
    const MAX_TRIES: usize = 1_000_000;
    let mut phi = vec![0.0; k * k];
    let Some(gap) = spec.assortative_gap else {
        for a in 0..k {
            for b in a..k {
                let v: f64 = beta.sample(rng);
                phi[a * k + b] = v;
                phi[b * k + a] = v;
            }
        }
        return Ok(phi);
    };
    let draw_below = |limit: f64, rng: &mut R| -> Result<f64> {
        for _ in 0..MAX_TRIES {
            let v: f64 = beta.sample(rng);
            if v <= limit {
                return Ok(v);
            }
        }
        Err(Error::Config(format!("no Beta draw below {limit} after {MAX_TRIES} tries")))
    };
    let mut min_in = 0.0;
    for _ in 0..MAX_TRIES {
        for a in 0..k {
            phi[a * k + a] = beta.sample(rng);
        }
        min_in = (0..k).map(|a| phi[a * k + a]).fold(f64::INFINITY, f64::min);
        if min_in > gap {
            break;
        }
    }
    if k > 0 && min_in <= gap {
        return Err(Error::Config(format!("no diagonal above the gap {gap} for K={k}")));
    }
    for a in 0..k {
        for b in a + 1..k {
            let v = draw_below(min_in - gap, rng)?;
            phi[a * k + b] = v;
            phi[b * k + a] = v;
        }
    }
    Ok(phi)
}

/// x_ij ~ Bernoulli(φ_{c_i c_j}) mapped to ±1, for i ≤ j including the
/// diagonal, mirrored to j < i.
pub fn sample_sbm_given_phi<R: Rng + ?Sized>(labels: &Assignment, phi: &[f64], rng: &mut R) -> Result<Adjacency> {
    let k = labels.num_clusters();
    if phi.len() != k * k {
        return Err(crate::error::contract(format!("phi must be {k}×{k}")));
    }
    let n = labels.len();
    let c = labels.labels();
    let mut data = vec![0i8; n * n];
    for i in 0..n {
        for j in i..n {
            let p = phi[c[i] * k + c[j]];
            let v = if rng.random::<f64>() < p { 1 } else { -1 };
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Adjacency::new(n, data)
}

pub fn sample_sbm<R: Rng + ?Sized>(labels: &Assignment, spec: &SbmSpec, rng: &mut R) -> Result<LabeledDataset> {
    let phi = sample_sbm_phi(labels.num_clusters(), spec, rng)?;
    let adjacency = sample_sbm_given_phi(labels, &phi, rng)?;
    Ok(LabeledDataset::Graph {
        adjacency,
        truth: Some(labels.clone()),
    })
}

/// Uniform random matching; x_j ~ N(0, prior_var·I₂), y_i ~ N(x_{c_i},
/// noise_var·I₂). Arguments are variances.
pub fn sample_noisy_pairs<R: Rng + ?Sized>(n: usize, prior_var: f64, noise_var: f64, rng: &mut R) -> LabeledDataset {
    let (ps, ns) = (prior_var.sqrt(), noise_var.sqrt());
    let x: Vec<f64> = (0..n * DIM).map(|_| gaussian(rng, ps)).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut y = Vec::with_capacity(n * DIM);
    for &c in &perm {
        for d in 0..DIM {
            y.push(x[c * DIM + d] + gaussian(rng, ns));
        }
    }
    LabeledDataset::Pairs {
        x: PointSet::new(DIM, x).expect("2D data"),
        y: PointSet::new(DIM, y).expect("2D data"),
        truth: Some(Permutation::new(perm).expect("shuffled identity")),
    }
}

pub(super) fn particles_given_labels<R: Rng + ?Sized>(
    labels: &Assignment,
    spec: &ParticleSpec,
    rng: &mut R,
) -> LabeledDataset {
    let walk_std = spec.walk_var.sqrt();
    let mut means: Vec<[f64; DIM]> = Vec::new();
    let mut data = Vec::with_capacity(labels.len() * DIM);
    for &c in labels.labels() {
        // every particle alive so far drifts by one step
        for m in means.iter_mut() {
            for v in m.iter_mut() {
                *v += gaussian(rng, walk_std);
            }
        }
        if c == means.len() {
            means.push([gaussian(rng, spec.sigma_mu), gaussian(rng, spec.sigma_mu)]);
        }
        for d in 0..DIM {
            data.push(means[c][d] + gaussian(rng, spec.sigma));
        }
    }
    LabeledDataset::Particles {
        timestamps: (1..=labels.len()).collect(),
        points: PointSet::new(DIM, data).expect("2D data"),
        truth: Some(labels.clone()),
    }
}

/// Draws the horizon T from the spec's range, then labels and tracks.
pub fn sample_drifting_particles<R: Rng + ?Sized>(spec: &ParticleSpec, rng: &mut R) -> LabeledDataset {
    let t = spec.t_range.sample(rng);
    let labels = super::sample_crp(spec.alpha, t, rng);
    particles_given_labels(&labels, spec, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{sample_crp, NRange};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn points(ds: &LabeledDataset) -> &PointSet {
        match ds {
            LabeledDataset::Clustering { points, .. } | LabeledDataset::Particles { points, .. } => points,
            _ => panic!("no points"),
        }
    }

    #[test]
    fn zero_noise_puts_points_on_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels = Assignment::new(vec![0, 1, 0, 1, 1]).unwrap();
        let ds = sample_gauss2d(&labels, 10.0, 0.0, &mut rng);
        let p = points(&ds);
        assert_eq!(p.point(0), p.point(2));
        assert_eq!(p.point(1), p.point(3));
        assert_eq!(p.point(1), p.point(4));
    }

    #[test]
    fn within_cluster_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let labels = Assignment::new(vec![0; 10_000]).unwrap();
        let ds = sample_gauss2d(&labels, 10.0, 1.0, &mut rng);
        let p = points(&ds);
        for d in 0..2 {
            let vals: Vec<f64> = p.iter().map(|x| x[d]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            assert!((var - 1.0).abs() < 0.05, "dim {d}: {var}");
        }
    }

    #[test]
    fn sbm_all_ones_when_phi_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels = Assignment::new(vec![0, 0, 1, 1, 2]).unwrap();
        let adj = sample_sbm_given_phi(&labels, &[1.0; 9], &mut rng).unwrap();
        for i in 0..5 {
            assert!(adj.row(i).iter().all(|&v| v == 1));
        }
    }

    #[test]
    fn sbm_block_density_binomial_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut labels = vec![0; 100];
        labels.extend(vec![1; 100]);
        let labels = Assignment::new(labels).unwrap();
        let spec = SbmSpec::default();
        for _ in 0..5 {
            let phi = sample_sbm_phi(2, &spec, &mut rng).unwrap();
            let adj = sample_sbm_given_phi(&labels, &phi, &mut rng).unwrap();
            // upper triangle of block (0,1): 100·100 independent entries
            let (mut ones, mut total) = (0usize, 0usize);
            for i in 0..100 {
                for j in 100..200 {
                    total += 1;
                    ones += (adj.get(i, j) == 1) as usize;
                }
            }
            let p = phi[1];
            let se = (p * (1.0 - p) / total as f64).sqrt().max(1e-12);
            let freq = ones as f64 / total as f64;
            assert!((freq - p).abs() <= 3.0 * se + 1e-9, "freq {freq} phi {p} se {se}");
        }
    }

    #[test]
    fn sbm_is_symmetric_with_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = sample_crp(0.7, 25, &mut rng);
        let ds = sample_sbm(&labels, &SbmSpec::default(), &mut rng).unwrap();
        let LabeledDataset::Graph { adjacency, .. } = ds else { panic!() };
        for i in 0..25 {
            for j in 0..25 {
                assert_eq!(adjacency.get(i, j), adjacency.get(j, i));
            }
        }
    }

    #[test]
    fn assortative_conditioning_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = SbmSpec {
            assortative_gap: Some(0.5),
            ..Default::default()
        };
        for k in 1..=10 {
            let phi = sample_sbm_phi(k, &spec, &mut rng).unwrap();
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        assert!(phi[a * k + a] - phi[a * k + b] >= 0.5);
                    }
                }
            }
        }
    }

    #[test]
    fn noisy_pairs_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let LabeledDataset::Pairs { x, y, truth } = sample_noisy_pairs(6, 3.0, 0.0, &mut rng) else { panic!() };
        let truth = truth.unwrap();
        for i in 0..6 {
            assert_eq!(y.point(i), x.point(truth.as_slice()[i]));
        }
        let LabeledDataset::Pairs { truth, .. } = sample_noisy_pairs(1, 3.0, 0.6, &mut rng) else { panic!() };
        assert_eq!(truth.unwrap().as_slice(), &[0]);
    }

    #[test]
    fn particles_without_walk_reduce_to_static_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = ParticleSpec {
            walk_var: 0.0,
            sigma: 0.0,
            t_range: NRange::new(40, 40).unwrap(),
            ..Default::default()
        };
        let ds = sample_drifting_particles(&spec, &mut rng);
        let labels = ds.cluster_truth().unwrap().clone();
        let p = points(&ds);
        for i in 0..40 {
            for j in 0..40 {
                if labels.labels()[i] == labels.labels()[j] {
                    assert_eq!(p.point(i), p.point(j));
                }
            }
        }
        let single = sample_drifting_particles(
            &ParticleSpec {
                t_range: NRange::new(1, 1).unwrap(),
                ..Default::default()
            },
            &mut rng,
        );
        assert_eq!(single.cluster_truth().unwrap().labels(), &[0]);
    }

    #[test]
    fn particle_walk_increments() {
        // one particle observed without noise: consecutive differences are the walk steps
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = ParticleSpec {
            walk_var: 0.25,
            sigma: 0.0,
            ..Default::default()
        };
        let labels = Assignment::new(vec![0; 20_001]).unwrap();
        let ds = particles_given_labels(&labels, &spec, &mut rng);
        let p = points(&ds);
        let steps: Vec<f64> = (1..p.len()).map(|t| p.point(t)[0] - p.point(t - 1)[0]).collect();
        let m = steps.len() as f64;
        let mean = steps.iter().sum::<f64>() / m;
        let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!(mean.abs() < 3.0 * (0.25 / m).sqrt(), "{mean}");
        assert!((var - 0.25).abs() < 0.25 * 0.05, "{var}");
    }

    #[test]
    fn samplers_are_seeded() {
        let spec = crate::generative::GenerativeSpec::CrpGauss2d(Default::default());
        let a = spec.sample(&mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = spec.sample(&mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }
}
