use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diagnostics::enumerate_partitions;
use crate::generative::{GenerativeSpec, SbmSpec};
use crate::math::softmax;
use crate::train::TrainOptions;

fn toy_model(seed: u64) -> NbpModel {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut m = NbpModel::init(&NbpArch::toy(5), &mut r).unwrap();
    for net in m.networks_mut() {
        for v in net.params_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
    m
}

fn random_graph(n: usize, seed: u64) -> Adjacency {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0i8; n * n];
    for i in 0..n {
        for j in i..n {
            let v = if r.random::<bool>() { 1 } else { -1 };
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Adjacency::new(n, data).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

fn probs_after(m: &NbpModel, adj: &Adjacency, prefix: &[usize]) -> Vec<f64> {
    let post = m.posterior(adj).unwrap();
    post.conditional_probs(&post.state_after(prefix).unwrap()).unwrap()
}

/// Conditional straight from the definitions with explicit loops.
fn oracle_probs(m: &NbpModel, adj: &Adjacency, prefix: &[usize]) -> Vec<f64> {
    let big_n = adj.n();
    let n = prefix.len();
    let k = prefix.iter().max().unwrap() + 1;
    let group = |j: usize| if j < n { prefix[j] } else { k };
    let s = |i: usize, g: usize, sign: i8| (0..big_n).filter(|&j| group(j) == g && adj.get(i, j) == sign).count() as f64;
    let r = |i: usize, g: usize| -> Vec<f64> {
        let mates: Vec<usize> = (0..big_n).filter(|&j| group(j) == group(i)).collect();
        let mut out = Vec::new();
        for sign in [1i8, -1] {
            let vals: Vec<f64> = mates.iter().map(|&j| s(j, g, sign)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            out.extend([s(i, g, sign), mean, var]);
        }
        vec![out[0], out[1], out[2], out[3], out[4], out[5]]
    };
    let u = |i: usize| -> Vec<f64> {
        let mut t = vec![0.0; m.d_t()];
        for g in 0..k {
            for (a, b) in t.iter_mut().zip(m.t.forward(&r(i, g)).unwrap()) {
                *a += b;
            }
        }
        t.extend(r(i, k));
        t
    };
    let add = |a: &mut Vec<f64>, b: Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    let mut q = vec![0.0; m.q.output_width()];
    for i in n + 1..big_n {
        add(&mut q, m.q.forward(&u(i)).unwrap());
    }
    let h_sum = |members: &[usize]| {
        let mut s = vec![0.0; m.h.output_width()];
        for &i in members {
            add(&mut s, m.h.forward(&u(i)).unwrap());
        }
        s
    };
    let mut logits = Vec::new();
    for opt in 0..=k {
        let mut gk = vec![0.0; m.g.output_width()];
        for c in 0..k {
            let mut mem: Vec<usize> = (0..n).filter(|&i| prefix[i] == c).collect();
            if c == opt {
                mem.push(n);
            }
            add(&mut gk, m.g.forward(&h_sum(&mem)).unwrap());
        }
        if opt == k {
            add(&mut gk, m.g.forward(&h_sum(&[n])).unwrap());
        }
        gk.extend_from_slice(&q);
        logits.push(m.f.forward(&gk).unwrap()[0]);
    }
    softmax(&logits)
}

#[test]
fn worked_count_example() {
    // row 0 = (+1, +1, −1, +1, +1); the rest is arbitrary but symmetric
    let mut data = vec![1i8; 25];
    for (j, v) in [1, 1, -1, 1, 1].into_iter().enumerate() {
        data[j] = v;
        data[j * 5] = v;
    }
    data[2 * 5 + 4] = -1;
    data[4 * 5 + 2] = -1;
    let adj = Adjacency::new(5, data).unwrap();
    let c = BlockCounts::compute(&adj, &[0, 0, 1, 1]).unwrap();
    assert_eq!((c.plus(0, 0), c.minus(0, 0)), (2, 0));
    assert_eq!((c.plus(0, 1), c.minus(0, 1)), (1, 1));
    assert_eq!((c.plus(0, 2), c.minus(0, 2)), (1, 0));
    // swapping columns 3 and 4 (same cluster) leaves the counts alone
    let swapped = adj.columns_reordered(&[0, 1, 3, 2, 4]);
    assert_eq!(swapped.row(0), &[1, 1, 1, -1, 1]);
    let cs = BlockCounts::compute(&swapped, &[0, 0, 1, 1]).unwrap();
    for k in 0..3 {
        assert_eq!((cs.plus(0, k), cs.minus(0, k)), (c.plus(0, k), c.minus(0, k)));
    }
}

#[test]
fn all_positive_graph() {
    let adj = Adjacency::new(6, vec![1; 36]).unwrap();
    let c = BlockCounts::compute(&adj, &[0, 1, 0]).unwrap();
    for i in 0..6 {
        for k in 0..3 {
            assert_eq!(c.minus(i, k), 0);
            assert_eq!(c.plus(i, k), c.sizes()[k]);
        }
    }
    assert_eq!(c.sizes(), &[2, 1, 3]);
}

#[test]
fn non_sign_entries_rejected() {
    assert!(Adjacency::new_unchecked_symmetry(2, vec![1, 0, 0, 1]).is_err());
    assert!(Adjacency::new(2, vec![1, 1, -1, 1]).is_err());
}

#[test]
fn single_row_groups_have_zero_variance_and_shared_moments() {
    let adj = random_graph(7, 1);
    let c = BlockCounts::compute(&adj, &[0, 1, 1, 0, 2]).unwrap();
    let f = c.row_features();
    let groups = 4;
    let at = |i: usize, k: usize| &f[(i * groups + k) * 6..(i * groups + k + 1) * 6];
    for k in 0..groups {
        // row 4 is alone in cluster 2
        assert_eq!(at(4, k)[2], 0.0);
        assert_eq!(at(4, k)[5], 0.0);
        // rows 1 and 2 share m and v
        for idx in [1, 2, 4, 5] {
            assert_eq!(at(1, k)[idx], at(2, k)[idx]);
        }
        for i in 0..7 {
            assert!(at(i, k)[2] >= 0.0 && at(i, k)[5] >= 0.0);
        }
    }
}

proptest! {
    #[test]
    fn counts_conserved_and_incremental_matches_recompute(seed in 0u64..10_000, n in 1usize..12) {
        let adj = random_graph(n, seed);
        let labels = crate::generative::sample_crp(0.9, n, &mut ChaCha8Rng::seed_from_u64(seed + 1));
        let mut inc = BlockCounts::compute(&adj, &[]).unwrap();
        for step in 0..n {
            let full = BlockCounts::compute(&adj, &labels.labels()[..step]).unwrap();
            prop_assert_eq!(&inc, &full);
            let k = full.num_clusters();
            for i in 0..n {
                let mut total = 0;
                for g in 0..=k {
                    prop_assert_eq!(full.plus(i, g) + full.minus(i, g), full.sizes()[g]);
                    total += full.plus(i, g) + full.minus(i, g);
                }
                prop_assert_eq!(total as usize, n);
            }
            inc.assign(&adj, labels.labels()[step]).unwrap();
        }
        prop_assert_eq!(inc, BlockCounts::compute(&adj, labels.labels()).unwrap());
    }
}

#[test]
fn zero_t_gives_zero_row_sums() {
    let mut m = toy_model(2);
    m.t.params_mut().iter_mut().for_each(|v| *v = 0.0);
    let adj = random_graph(6, 3);
    let c = BlockCounts::compute(&adj, &[0, 1, 0]).unwrap();
    let u = m.encode_rows(&c).unwrap();
    let d_u = m.d_t() + 6;
    for i in 0..6 {
        assert!(u[i * d_u..i * d_u + m.d_t()].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn single_row_is_forced() {
    let m = toy_model(4);
    let adj = Adjacency::new(1, vec![1]).unwrap();
    let s = m.sample_assignment(&adj, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(s.labels.labels(), &[0]);
    assert_eq!(s.log_prob, 0.0);
    let (loss, grads) = nbp_nll_and_grads(&m, &adj, &s.labels).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.blocks().iter().all(|b| b.iter().all(|v| *v == 0.0)));
}

#[test]
fn matches_direct_evaluation_and_normalizes() {
    let m = toy_model(5);
    let adj = random_graph(8, 6);
    for prefix in [vec![0], vec![0, 1, 0], vec![0, 1, 1, 2, 0], vec![0, 0, 1, 2, 1, 3, 0]] {
        let p = probs_after(&m, &adj, &prefix);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let o = oracle_probs(&m, &adj, &prefix);
        assert!(close(&p, &o, 1e-9), "{prefix:?}: {p:?} vs {o:?}");
    }
}

#[test]
fn relabeling_permutes_and_within_cluster_order_is_ignored() {
    let m = toy_model(7);
    let adj = random_graph(8, 8);
    let prefix = [0, 1, 0, 2, 1];
    let base = probs_after(&m, &adj, &prefix);
    // rows 0 and 2 (cluster 0) swapped: same partition, same labels
    let order = [2, 1, 0, 3, 4, 5, 6, 7];
    let p = probs_after(&m, &adj.reordered(&order), &prefix);
    assert!(close(&base, &p, 1e-9));
    // row 1 moved first: clusters 0 and 1 swap names
    let order = [1, 0, 2, 3, 4, 5, 6, 7];
    let relabeled = [0, 1, 1, 2, 0];
    let p = probs_after(&m, &adj.reordered(&order), &relabeled);
    let expected = [base[1], base[0], base[2], base[3]];
    assert!(close(&expected, &p, 1e-9));
}

#[test]
fn unassigned_order_is_ignored() {
    let m = toy_model(9);
    let adj = random_graph(9, 10);
    let prefix = [0, 1, 1, 0];
    let base = probs_after(&m, &adj, &prefix);
    let order = [0, 1, 2, 3, 4, 8, 6, 5, 7];
    let p = probs_after(&m, &adj.reordered(&order), &prefix);
    assert!(close(&base, &p, 1e-9));
}

#[test]
fn chain_rule_mass_over_all_partitions() {
    let m = toy_model(11);
    let adj = random_graph(5, 12);
    let parts = enumerate_partitions(5).unwrap();
    assert_eq!(parts.len(), 52);
    let total: f64 = parts.iter().map(|c| m.log_prob(&adj, c).unwrap().exp()).sum();
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

fn fd_check(m: &NbpModel, graphs: &[Adjacency], truth: &Assignment) {
    let (_, grads) = nbp_nll_and_grads_replicas(m, graphs, truth).unwrap();
    let blocks: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
    let eps = 1e-5;
    let loss_at = |mm: &NbpModel| -> f64 {
        graphs.iter().map(|a| nbp_nll(mm, a, truth).unwrap()).sum::<f64>() / graphs.len() as f64
    };
    let base = loss_at(m);
    let mut worst: f64 = 0.0;
    for (b, analytic) in blocks.iter().enumerate() {
        for i in 0..analytic.len() {
            let mut plus = m.clone();
            plus.networks_mut()[b].params_mut()[i] += eps;
            let mut minus = m.clone();
            minus.networks_mut()[b].params_mut()[i] -= eps;
            let (lp, lm) = (loss_at(&plus), loss_at(&minus));
            let fd = (lp - lm) / (2.0 * eps);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3);
            // one-sided slopes this far apart mean a ReLU kink inside the step
            if err > 1e-4 && ((lp - base) - (base - lm)).abs() / eps >= (fd - analytic[i]).abs() {
                continue;
            }
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn gradients_match_finite_differences() {
    let m = toy_model(13);
    let truth = Assignment::new(vec![0, 1, 0, 2, 1, 1]).unwrap();
    fd_check(&m, &[random_graph(6, 14)], &truth);
    fd_check(&m, &[random_graph(6, 15), random_graph(6, 16)], &truth);
}

#[test]
fn loss_equals_chained_log_prob() {
    let m = toy_model(17);
    let adj = random_graph(9, 18);
    let truth = Assignment::new(vec![0, 1, 1, 0, 2, 3, 2, 0, 1]).unwrap();
    let loss = nbp_nll(&m, &adj, &truth).unwrap();
    let (loss_g, _) = nbp_nll_and_grads(&m, &adj, &truth).unwrap();
    let lp = m.log_prob(&adj, &truth).unwrap();
    assert!((loss + lp).abs() <= 1e-12 * loss.abs().max(1.0));
    assert!((loss - loss_g).abs() <= 1e-12 * loss.abs().max(1.0));
}

#[test]
fn wide_beam_is_ranked_enumeration() {
    let m = toy_model(19);
    let adj = random_graph(4, 20);
    let beams = m.beam_search(&adj, 15).unwrap();
    let mut exact: Vec<f64> = enumerate_partitions(4).unwrap().iter().map(|c| m.log_prob(&adj, c).unwrap()).collect();
    exact.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert_eq!(beams.len(), 15);
    for (b, e) in beams.iter().zip(&exact) {
        assert!((b.log_prob - e).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip() {
    let m = toy_model(21);
    let mut buf = Vec::new();
    m.to_checkpoint().write_to(&mut buf).unwrap();
    let back = NbpModel::from_checkpoint(&crate::checkpoint::Checkpoint::read_from(&buf[..]).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn short_training_runs() {
    let mut m = toy_model(22);
    let gen = GenerativeSpec::SbmBetaBernoulli(SbmSpec { n_range: crate::generative::NRange::new(4, 8).unwrap(), ..Default::default() });
    let opts = TrainOptions { iterations: 3, replicas: 4, ..Default::default() };
    let log = train_nbp(&mut m, &gen, &opts, None).unwrap();
    assert_eq!(log.losses.len(), 3);
    assert!(log.losses.iter().all(|l| l.is_finite()));
}

fn random_widths(r: &mut ChaCha8Rng, input: usize, output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend((0..r.random_range(1..=2)).map(|_| r.random_range(1..=4)));
    w.push(output);
    w
}

fn random_toy_config(seed: u64) -> (NbpModel, Vec<Adjacency>, Assignment) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let d_t = r.random_range(1..=4);
    let (d_h, d_q, d_g) = (r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=4));
    let arch = NbpArch {
        t: random_widths(&mut r, 6, d_t),
        h: random_widths(&mut r, d_t + 6, d_h),
        q: random_widths(&mut r, d_t + 6, d_q),
        g: random_widths(&mut r, d_h, d_g),
        f: random_widths(&mut r, d_g + d_q, 1),
    };
    let mut m = NbpModel::init(&arch, &mut r).unwrap();
    for net in m.networks_mut() {
        for v in net.params_mut() {
            *v += r.random_range(-0.2..0.2);
        }
    }
    let n = r.random_range(1..=6);
    let raw: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
    let truth = Assignment::canonicalize(&raw);
    let graphs = (0..r.random_range(1..=2)).map(|_| random_graph(n, r.random())).collect();
    (m, graphs, truth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn random_toy_configs_match_finite_differences(seed in 0u64..u64::MAX) {
        let (m, graphs, truth) = random_toy_config(seed);
        fd_check(&m, &graphs, &truth);
    }
}
