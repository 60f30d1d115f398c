//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 3 to 9 read trained checkpoints from `artifacts/<task>/`
//! (override the root with `COMBINFER_ARTIFACTS`). A missing or unfinished
//! run is reported as a failure together with the command that produces it.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use combinfer_core::assignment::{Assignment, Permutation};
use combinfer_core::checkpoint::Checkpoint;
use combinfer_core::diagnostics::reports::{clustering_batches, exact_small_n, k_mean_curve, nbp_recovery, npp_exact, probe_report};
use combinfer_core::diagnostics::{enumerate_partitions, enumerate_permutations, exchangeability_monitor, geweke_test};
use combinfer_core::generative::{sample_crp, Adjacency, GenerativeSpec, NRange, ParticleSpec, PointSet};
use combinfer_core::io::{RunManifest, RunStatus};
use combinfer_core::nbp::{nbp_nll, nbp_nll_and_grads_replicas, BlockCounts, NbpArch, NbpModel};
use combinfer_core::ncp::{conditional_probs, nll_loss, nll_loss_and_grads_replicas, ClusterState, NcpArch, NcpModel};
use combinfer_core::nn::{Network, NetworkSpec};
use combinfer_core::npp::{npp_nll, npp_nll_and_grads_replicas, symmetric_features, NppArch, NppModel, PairDensity};
use combinfer_core::npt::{self, npt_nll, npt_nll_and_grads_replicas, DecayedState, NptModel};
use combinfer_core::sequential::SequentialPosterior;
use combinfer_core::train::TrainOptions;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Result<Outcome, String>;

// ---------------------------------------------------------------- helpers

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_points(r: &mut ChaCha8Rng, d: usize, n: usize) -> PointSet {
    PointSet::new(d, (0..d * n).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
}

fn random_graph(r: &mut ChaCha8Rng, n: usize) -> Adjacency {
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

fn perturb(nets: Vec<&mut Network>, r: &mut ChaCha8Rng, scale: f64) {
    for net in nets {
        for v in net.params_mut() {
            *v += r.random_range(-scale..scale);
        }
    }
}

fn random_widths(r: &mut ChaCha8Rng, input: usize, output: usize, max_hidden: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend((0..r.random_range(1..=max_hidden)).map(|_| r.random_range(1..=5)));
    w.push(output);
    w
}

fn random_ncp_arch(r: &mut ChaCha8Rng, d_x: usize) -> NcpArch {
    let (d_q, d_g) = (r.random_range(1..=5), r.random_range(1..=5));
    let h = r.random::<bool>().then(|| {
        let d_h = r.random_range(1..=4);
        random_widths(r, d_x, d_h, 3)
    });
    let d_h = h.as_ref().map_or(d_x + 1, |w| *w.last().unwrap());
    NcpArch {
        d_x,
        q: random_widths(r, d_x, d_q, 3),
        g: random_widths(r, d_h, d_g, 3),
        f: random_widths(r, d_g + d_q, 1, 3),
        h,
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0)).fold(0.0, f64::max)
}

/// Shuffles the prefix `..query` or the unassigned tail `query + 1..`;
/// the query point keeps its position.
fn split_order(r: &mut ChaCha8Rng, n: usize, query: usize, shuffle_prefix: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle_prefix {
        order[..query].shuffle(r);
    } else {
        order[query + 1..].shuffle(r);
    }
    order
}

/// Labels of the reordered prefix and the map from old to new cluster names.
fn relabel(prefix: &[usize], order: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let permuted: Vec<usize> = order[..prefix.len()].iter().map(|&i| prefix[i]).collect();
    let canon = Assignment::canonicalize(&permuted).into_inner();
    let k = prefix.iter().max().map_or(0, |m| m + 1);
    let mut map = vec![0; k + 1];
    for (i, &old) in permuted.iter().enumerate() {
        map[old] = canon[i];
    }
    map[k] = k;
    (canon, map)
}

fn artifacts() -> PathBuf {
    std::env::var_os("COMBINFER_ARTIFACTS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../artifacts"))
}

/// A completed training run's checkpoint and its generative model.
fn trained(task: &str, config: &str) -> Result<(Checkpoint, GenerativeSpec), String> {
    let dir = artifacts().join(task);
    let hint = format!("run `combinfer train --config configs/{config} --out artifacts/{task}`");
    let manifest = RunManifest::load(&dir.join("manifest.json")).map_err(|_| format!("no training run in {}; {hint}", dir.display()))?;
    if !matches!(manifest.status, RunStatus::Completed) {
        return Err(format!("training in {} has not completed; {hint}", dir.display()));
    }
    let c = Checkpoint::load(dir.join("model.ckpt")).map_err(|e| format!("{e}; {hint}"))?;
    let spec = c
        .config
        .get("generative")
        .and_then(|g| serde_json::from_value(g.clone()).ok())
        .ok_or_else(|| "checkpoint lacks its generative block".to_string())?;
    Ok((c, spec))
}

fn trained_ncp() -> Result<(NcpModel, GenerativeSpec), String> {
    let (c, spec) = trained("ncp", "ncp_gauss2d.json")?;
    Ok((NcpModel::from_checkpoint(&c).map_err(|e| e.to_string())?, spec))
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

// ---------------------------------------------------- structural probes

#[derive(Default)]
struct Worst {
    normalization: f64,
    relabel: f64,
    within: f64,
    unassigned: f64,
    incremental: f64,
}

fn ncp_state(m: &NcpModel, x: &PointSet, labels: &[usize]) -> ClusterState {
    let post = m.posterior(x).unwrap();
    let mut s = post.initial_state().unwrap();
    for &c in labels {
        s.advance(m, c).unwrap();
    }
    s
}

fn ncp_invariances(m: &NcpModel, seed: u64, w: &mut Worst) {
    let mut r = rng(seed);
    let n = r.random_range(4..=10);
    let x = random_points(&mut r, m.d_x(), n);
    let t = r.random_range(1..n);
    let labels = sample_crp(1.0, t, &mut r).into_inner();
    let base = conditional_probs(m, &ncp_state(m, &x, &labels)).unwrap();
    w.normalization = w.normalization.max((base.iter().sum::<f64>() - 1.0).abs());

    let order = split_order(&mut r, n, t, true);
    let (new_labels, map) = relabel(&labels, &order);
    let p = conditional_probs(m, &ncp_state(m, &x.reordered(&order), &new_labels)).unwrap();
    let changed = new_labels.iter().zip(&order).any(|(&nl, &o)| nl != labels[o]);
    let dev = (0..base.len()).map(|c| (p[map[c]] - base[c]).abs()).fold(0.0, f64::max);
    if changed {
        w.relabel = w.relabel.max(dev);
    } else {
        w.within = w.within.max(dev);
    }

    let order = split_order(&mut r, n, t, false);
    let p = conditional_probs(m, &ncp_state(m, &x.reordered(&order), &labels)).unwrap();
    w.unassigned = w.unassigned.max(max_abs(&p, &base));
}

fn ncp_incremental(m: &NcpModel, seed: u64, w: &mut Worst) {
    let mut r = rng(seed);
    let n = r.random_range(2..=14);
    let x = random_points(&mut r, m.d_x(), n);
    let labels = sample_crp(1.5, n, &mut r).into_inner();
    let enc = m.encode_points(&x).unwrap();
    let post = m.posterior(&x).unwrap();
    let mut s = post.initial_state().unwrap();
    for t in 0..n {
        if t > 0 {
            post.log_conditionals(&s).unwrap();
        }
        s.advance(m, labels[t]).unwrap();
        let k = labels[..=t].iter().max().unwrap() + 1;
        let mut g_total = vec![0.0; m.d_g()];
        for c in 0..k {
            let mut h = vec![0.0; m.d_h()];
            for i in (0..=t).filter(|&i| labels[i] == c) {
                for (a, v) in h.iter_mut().zip(enc.h(i)) {
                    *a += v;
                }
            }
            w.incremental = w.incremental.max(max_rel(&s.cluster_sums()[c], &h));
            for (a, v) in g_total.iter_mut().zip(m.g.forward(&h).unwrap()) {
                *a += v;
            }
        }
        w.incremental = w.incremental.max(max_rel(&s.g_total(), &g_total));
        let mut q = vec![0.0; m.d_q()];
        for i in t + 1..n {
            for (a, v) in q.iter_mut().zip(enc.q(i)) {
                *a += v;
            }
        }
        w.incremental = w.incremental.max(max_rel(s.unassigned_sum(), &q));
    }
}

fn nbp_probs(m: &NbpModel, adj: &Adjacency, prefix: &[usize]) -> Vec<f64> {
    let post = m.posterior(adj).unwrap();
    post.conditional_probs(&post.state_after(prefix).unwrap()).unwrap()
}

fn nbp_invariances(m: &NbpModel, seed: u64, n_max: usize, w: &mut Worst) {
    let mut r = rng(seed);
    let n = r.random_range(3..=n_max);
    let adj = random_graph(&mut r, n);
    let t = r.random_range(1..n);
    let labels = sample_crp(1.0, t, &mut r).into_inner();
    let base = nbp_probs(m, &adj, &labels);
    w.normalization = w.normalization.max((base.iter().sum::<f64>() - 1.0).abs());

    let order = split_order(&mut r, n, t, true);
    let (new_labels, map) = relabel(&labels, &order);
    let p = nbp_probs(m, &adj.reordered(&order), &new_labels);
    let changed = new_labels.iter().zip(&order).any(|(&nl, &o)| nl != labels[o]);
    let dev = (0..base.len()).map(|c| (p[map[c]] - base[c]).abs()).fold(0.0, f64::max);
    if changed {
        w.relabel = w.relabel.max(dev);
    } else {
        w.within = w.within.max(dev);
    }

    let order = split_order(&mut r, n, t, false);
    let p = nbp_probs(m, &adj.reordered(&order), &labels);
    w.unassigned = w.unassigned.max(max_abs(&p, &base));
}

/// Incremental counts equal recomputed counts exactly, at every step.
fn nbp_counts_conserved(seed: u64) -> bool {
    let mut r = rng(seed);
    let n = r.random_range(1..=12);
    let adj = random_graph(&mut r, n);
    let labels = sample_crp(1.2, n, &mut r).into_inner();
    let mut inc = BlockCounts::compute(&adj, &[]).unwrap();
    for t in 0..n {
        inc.assign(&adj, labels[t]).unwrap();
        let fresh = BlockCounts::compute(&adj, &labels[..=t]).unwrap();
        if inc != fresh {
            return false;
        }
        let total: u32 = inc.sizes().iter().sum();
        let rows_ok = (0..n).all(|i| (0..inc.sizes().len()).map(|k| inc.plus(i, k) + inc.minus(i, k)).sum::<u32>() == n as u32);
        if total != n as u32 || !rows_ok {
            return false;
        }
    }
    true
}

fn npp_probs(m: &NppModel, x: &PointSet, y: &PointSet, picks: &[usize]) -> Vec<f64> {
    let post = m.posterior(x, y).unwrap();
    let mut s = post.initial_state().unwrap();
    for &j in picks {
        let o = s.available().iter().position(|&a| a == j).unwrap();
        s.advance(o).unwrap();
    }
    post.conditional_probs(&s).unwrap()
}

fn toy_ncp(seed: u64) -> NcpModel {
    let mut r = rng(seed);
    let mut m = NcpModel::init(&NcpArch::toy(2, 6), &mut r).unwrap();
    perturb(m.networks_mut(), &mut r, 0.1);
    m
}

fn toy_nbp(seed: u64) -> NbpModel {
    let mut r = rng(seed);
    let mut m = NbpModel::init(&NbpArch::toy(5), &mut r).unwrap();
    perturb(m.networks_mut(), &mut r, 0.1);
    m
}

fn toy_npp(seed: u64) -> NppModel {
    let mut r = rng(seed);
    let mut m = NppModel::init(&NppArch::toy(6), PairDensity::gaussian(3.0, 0.6).unwrap(), &mut r).unwrap();
    perturb(m.networks_mut(), &mut r, 0.1);
    m
}

fn toy_npt(seed: u64, b: f64) -> NptModel {
    let mut r = rng(seed);
    let mut m = NptModel::init(&NcpArch::toy(2, 6), b, &mut r).unwrap();
    perturb(m.ncp.networks_mut(), &mut r, 0.1);
    m
}

fn partition_mass(lp: impl Fn(&Assignment) -> f64) -> f64 {
    enumerate_partitions(5).unwrap().iter().map(|a| lp(a).exp()).sum()
}

// ----------------------------------------------------------- criteria

fn structural() -> Result<Outcome, String> {
    let tol = 1e-9;
    let mut w = Worst::default();
    for seed in 0..40 {
        let m = toy_ncp(seed % 4);
        ncp_invariances(&m, 1000 + seed, &mut w);
        ncp_incremental(&m, 2000 + seed, &mut w);
        let mut r = rng(3000 + seed);
        let mut learned_arch = NcpArch::toy(2, 5);
        learned_arch.h = Some(vec![2, 5, 4]);
        learned_arch.g[0] = 4;
        let mut learned = NcpModel::init(&learned_arch, &mut r).unwrap();
        perturb(learned.networks_mut(), &mut r, 0.1);
        ncp_invariances(&learned, 4000 + seed, &mut w);
        nbp_invariances(&toy_nbp(seed % 4), 5000 + seed, 10, &mut w);
    }

    let counts_exact = (0..200).all(|s| nbp_counts_conserved(6000 + s));

    let mut swap_bitwise = true;
    let mut r = rng(7000);
    for _ in 0..1000 {
        let a: Vec<f64> = (0..r.random_range(1..8)).map(|_| r.random_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..a.len()).map(|_| r.random_range(-10.0..10.0)).collect();
        let (f1, f2) = (symmetric_features(&a, &b), symmetric_features(&b, &a));
        swap_bitwise &= f1.iter().zip(&f2).all(|(u, v)| u.to_bits() == v.to_bits());
    }
    for seed in 0..20 {
        let m = toy_npp(seed % 3);
        let mut r = rng(7100 + seed);
        let n = r.random_range(2..=7);
        let (x, y) = (random_points(&mut r, 2, n), random_points(&mut r, 2, n));
        let mut picks: Vec<usize> = (0..n).collect();
        picks.shuffle(&mut r);
        let p = npp_probs(&m, &x, &y, &picks[..r.random_range(0..n)]);
        w.normalization = w.normalization.max((p.iter().sum::<f64>() - 1.0).abs());
    }

    let mut mass_err: f64 = 0.0;
    for seed in 0..3 {
        let mut r = rng(8000 + seed);
        let x = random_points(&mut r, 2, 5);
        let ncp = toy_ncp(8100 + seed);
        mass_err = mass_err.max((partition_mass(|a| ncp.log_prob(&x, a).unwrap()) - 1.0).abs());
        let npt = toy_npt(8200 + seed, 0.3);
        mass_err = mass_err.max((partition_mass(|a| npt.log_prob(&x, a).unwrap()) - 1.0).abs());
        let nbp = toy_nbp(8300 + seed);
        let adj = random_graph(&mut r, 5);
        mass_err = mass_err.max((partition_mass(|a| nbp.log_prob(&adj, a).unwrap()) - 1.0).abs());
        let npp = toy_npp(8400 + seed);
        let y = random_points(&mut r, 2, 5);
        let total: f64 = enumerate_permutations(5).unwrap().iter().map(|p| npp.log_prob(&x, &y, p).unwrap().exp()).sum();
        mass_err = mass_err.max((total - 1.0).abs());
    }

    let pass = w.normalization <= tol
        && w.relabel <= tol
        && w.within <= tol
        && w.unassigned <= tol
        && w.incremental <= tol
        && counts_exact
        && swap_bitwise
        && mass_err <= 1e-6;
    Ok(outcome(
        pass,
        format!(
            "normalization {:.1e}, relabel {:.1e}, within-cluster {:.1e}, unassigned {:.1e}, incremental {:.1e} (tol 1e-9); counts exact {counts_exact}; swap bitwise {swap_bitwise}; chain-rule mass error {mass_err:.1e} (tol 1e-6)",
            w.normalization, w.relabel, w.within, w.unassigned, w.incremental
        ),
    ))
}

/// Worst relative error of analytic gradients against central differences,
/// or `None` when a central difference straddles a ReLU kink. At a kink the
/// two one-sided slopes differ by about twice the central-difference error;
/// in a smooth region they agree to O(step).
fn fd_worst<M: Clone>(m: &M, analytic: &[Vec<f64>], loss: impl Fn(&M) -> f64, nudge: impl Fn(&mut M, usize, usize, f64)) -> Option<f64> {
    let eps = 1e-5;
    let base = loss(m);
    let mut worst: f64 = 0.0;
    for (b, block) in analytic.iter().enumerate() {
        for (i, &a) in block.iter().enumerate() {
            let mut plus = m.clone();
            nudge(&mut plus, b, i, eps);
            let mut minus = m.clone();
            nudge(&mut minus, b, i, -eps);
            let (lp, lm) = (loss(&plus), loss(&minus));
            let fd = (lp - lm) / (2.0 * eps);
            let err = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-3);
            if err > 1e-4 && ((lp - base) / eps - (base - lm) / eps).abs() >= (fd - a).abs() {
                return None;
            }
            worst = worst.max(err);
        }
    }
    Some(worst)
}

fn random_truth(r: &mut ChaCha8Rng, n: usize) -> Assignment {
    let raw: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
    Assignment::canonicalize(&raw)
}

type Case = fn(u64) -> Result<Option<f64>, String>;

fn ncp_case(seed: u64) -> Result<Option<f64>, String> {
    let mut r = rng(seed);
    let d_x = r.random_range(1..=3);
    let mut m = NcpModel::init(&random_ncp_arch(&mut r, d_x), &mut r).map_err(e)?;
    perturb(m.networks_mut(), &mut r, 0.2);
    let n = r.random_range(1..=6);
    let truth = random_truth(&mut r, n);
    let xs: Vec<PointSet> = (0..r.random_range(1..=2)).map(|_| random_points(&mut r, d_x, n)).collect();
    let (_, g) = nll_loss_and_grads_replicas(&m, &xs, &truth).map_err(e)?;
    let blocks: Vec<Vec<f64>> = g.blocks().iter().map(|b| b.to_vec()).collect();
    let loss = |mm: &NcpModel| xs.iter().map(|x| nll_loss(mm, x, &truth).unwrap()).sum::<f64>() / xs.len() as f64;
    Ok(fd_worst(&m, &blocks, loss, |mm, b, i, d| mm.networks_mut()[b].params_mut()[i] += d))
}

fn nbp_case(seed: u64) -> Result<Option<f64>, String> {
    let mut r = rng(seed);
    let d_t = r.random_range(1..=4);
    let (d_h, d_q, d_g) = (r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=4));
    let arch = NbpArch {
        t: random_widths(&mut r, 6, d_t, 2),
        h: random_widths(&mut r, d_t + 6, d_h, 2),
        q: random_widths(&mut r, d_t + 6, d_q, 2),
        g: random_widths(&mut r, d_h, d_g, 2),
        f: random_widths(&mut r, d_g + d_q, 1, 2),
    };
    let mut m = NbpModel::init(&arch, &mut r).map_err(e)?;
    perturb(m.networks_mut(), &mut r, 0.2);
    let n = r.random_range(1..=6);
    let truth = random_truth(&mut r, n);
    let gs: Vec<Adjacency> = (0..r.random_range(1..=2)).map(|_| random_graph(&mut r, n)).collect();
    let (_, g) = nbp_nll_and_grads_replicas(&m, &gs, &truth).map_err(e)?;
    let blocks: Vec<Vec<f64>> = g.blocks().iter().map(|b| b.to_vec()).collect();
    let loss = |mm: &NbpModel| gs.iter().map(|a| nbp_nll(mm, a, &truth).unwrap()).sum::<f64>() / gs.len() as f64;
    Ok(fd_worst(&m, &blocks, loss, |mm, b, i, d| mm.networks_mut()[b].params_mut()[i] += d))
}

fn npp_case(seed: u64) -> Result<Option<f64>, String> {
    let mut r = rng(seed);
    let d_g = r.random_range(1..=5);
    let arch = NppArch { g: random_widths(&mut r, 2, d_g, 3), r: random_widths(&mut r, 3 * d_g, 1, 3) };
    let density = if r.random::<bool>() {
        let w = random_widths(&mut r, 4, 1, 3);
        PairDensity::Learned(Network::init(NetworkSpec::new(w).map_err(e)?, &mut r).map_err(e)?)
    } else {
        PairDensity::gaussian(r.random_range(0.5..4.0), r.random_range(0.2..1.5)).map_err(e)?
    };
    let mut m = NppModel::init(&arch, density, &mut r).map_err(e)?;
    perturb(m.networks_mut(), &mut r, 0.2);
    let n = r.random_range(1..=6);
    let batch: Vec<(PointSet, PointSet, Permutation)> = (0..r.random_range(1..=2))
        .map(|_| {
            let (x, y) = (random_points(&mut r, 2, n), random_points(&mut r, 2, n));
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut r);
            (x, y, Permutation::new(p).unwrap())
        })
        .collect();
    let (_, g) = npp_nll_and_grads_replicas(&m, &batch).map_err(e)?;
    let blocks: Vec<Vec<f64>> = g.blocks().iter().map(|b| b.to_vec()).collect();
    let loss = |mm: &NppModel| batch.iter().map(|(x, y, t)| npp_nll(mm, x, y, t).unwrap()).sum::<f64>() / batch.len() as f64;
    Ok(fd_worst(&m, &blocks, loss, |mm, b, i, d| mm.networks_mut()[b].params_mut()[i] += d))
}

fn npt_case(seed: u64) -> Result<Option<f64>, String> {
    let mut r = rng(seed);
    let d_x = r.random_range(1..=3);
    let arch = random_ncp_arch(&mut r, d_x);
    let mut m = NptModel::init(&arch, r.random_range(0.05..2.0), &mut r).map_err(e)?;
    perturb(m.ncp.networks_mut(), &mut r, 0.2);
    let n = r.random_range(1..=7);
    let truth = random_truth(&mut r, n);
    let xs: Vec<PointSet> = (0..r.random_range(1..=2)).map(|_| random_points(&mut r, d_x, n)).collect();
    let (_, g) = npt_nll_and_grads_replicas(&m, &xs, &truth).map_err(e)?;
    let blocks: Vec<Vec<f64>> = g.blocks().iter().map(|b| b.to_vec()).collect();
    let nets = m.ncp.networks().len();
    let loss = |mm: &NptModel| xs.iter().map(|x| npt_nll(mm, x, &truth).unwrap()).sum::<f64>() / xs.len() as f64;
    Ok(fd_worst(&m, &blocks, loss, |mm, b, i, d| {
        if b == nets {
            mm.decay_raw += d;
        } else {
            mm.ncp.networks_mut()[b].params_mut()[i] += d;
        }
    }))
}

fn gradients() -> Result<Outcome, String> {
    let configs = 100;
    let families: [(&str, Case, u64); 4] = [("ncp", ncp_case, 10_000), ("nbp", nbp_case, 20_000), ("npp", npp_case, 30_000), ("npt", npt_case, 40_000)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, case, base) in families {
        let (mut worst, mut accepted, mut kinked) = (0.0f64, 0, 0);
        let mut seed = base;
        while accepted < configs && kinked < configs {
            match case(seed)? {
                Some(w) => {
                    worst = worst.max(w);
                    accepted += 1;
                }
                None => kinked += 1,
            }
            seed += 1;
        }
        pass &= accepted == configs && worst <= 1e-4;
        parts.push(format!("{name} {worst:.1e} ({kinked} redrawn at a ReLU kink)"));
    }
    Ok(outcome(pass, format!("{configs} configs per family, worst relative error {} (tol 1e-4, step 1e-5)", parts.join(", "))))
}

fn small_n() -> Result<Outcome, String> {
    let (m, spec) = trained_ncp()?;
    let rep = exact_small_n(&m, &spec, 5, 50, 31).map_err(e)?;
    Ok(outcome(
        rep.mean_tv <= 0.10 && rep.median_tv <= 0.08,
        format!("mean TV {:.4} (max 0.10), median TV {:.4} (max 0.08), 50 datasets, N=5", rep.mean_tv, rep.median_tv),
    ))
}

fn geweke() -> Result<Outcome, String> {
    let (m, spec) = trained_ncp()?;
    let rep = geweke_test(&m, &spec, 30, 10_000, 41).map_err(e)?;
    let ns: Vec<usize> = (1..=10).map(|i| 5 * i).collect();
    let curve = k_mean_curve(&m, &spec, &ns, 10_000, 42).map_err(e)?;
    let worst = curve
        .iter()
        .map(|r| (r.estimated_mean - r.exact_mean).abs() / r.exact_std)
        .fold(0.0, f64::max);
    Ok(outcome(
        rep.tv_distance <= 0.05 && worst <= 1.0,
        format!(
            "N=30 TV {:.4} (max 0.05); mean-K curve worst |estimated - exact| / exact std {:.3} over N=5..50 (max 1)",
            rep.tv_distance, worst
        ),
    ))
}

fn exchangeability() -> Result<Outcome, String> {
    let (m, spec) = trained_ncp()?;
    // Each held-out dataset is a training-shaped batch: one labeling, 64 point sets.
    let batches = clustering_batches(&spec, None, 100, 64, 51, "exchangeability").map_err(e)?;
    let rep = exchangeability_monitor(&m, &batches, 8, 52).map_err(e)?;
    let singles: Vec<_> = batches.iter().map(|(sets, l)| (vec![sets[0].clone()], l.clone())).collect();
    let single = exchangeability_monitor(&m, &singles, 8, 52).map_err(e)?;
    Ok(outcome(
        rep.median_ratio <= 5e-2,
        format!(
            "median std/mean NLL {:.4} over 100 batches of 64, 8 orderings (max 0.05); single point set median {:.4}",
            rep.median_ratio, single.median_ratio
        ),
    ))
}

fn probe() -> Result<Outcome, String> {
    let (m, spec) = trained_ncp()?;
    let rep = probe_report(&m, &spec, 61).map_err(e)?;
    let worst = rep.max_abs_dev.iter().copied().fold(0.0, f64::max);
    Ok(outcome(
        worst <= 0.10 && rep.argmax_agreement >= 95,
        format!(
            "max abs deviation per option {:?} (max 0.10), argmax agreement {}/{} (min 95)",
            rep.max_abs_dev.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            rep.argmax_agreement,
            rep.rows.len()
        ),
    ))
}

fn npp_oracle() -> Result<Outcome, String> {
    let (c, spec) = trained("npp", "npp_pairs2d.json")?;
    let m = NppModel::from_checkpoint(&c).map_err(e)?;
    let rep = npp_exact(&m, &spec, 6, 50, 71).map_err(e)?;
    Ok(outcome(rep.mean_tv <= 0.12, format!("mean TV {:.4} over 50 datasets, N=6 (max 0.12)", rep.mean_tv)))
}

/// Three well-separated blobs with every cluster present.
fn three_blobs(n: usize, seed: u64) -> PointSet {
    let mut r = rng(seed);
    let centers = [(-8.0, -5.0), (8.0, -5.0), (0.0, 9.0)];
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (cx, cy) = centers[if i < 3 { i } else { r.random_range(0..3) }];
        data.push(cx + r.sample(normal));
        data.push(cy + r.sample(normal));
    }
    let order: Vec<usize> = {
        let mut o: Vec<usize> = (0..n).collect();
        o.shuffle(&mut r);
        o
    };
    PointSet::new(2, data).unwrap().reordered(&order)
}

fn complexity() -> Result<Outcome, String> {
    let (m, _) = trained_ncp()?;
    let ns: Vec<usize> = (1..=10).map(|i| 10 * i).collect();
    let samples = 20;
    let mut counts = Vec::new();
    let mut mean_k = Vec::new();
    for &n in &ns {
        let x = three_blobs(n, 80 + n as u64);
        let post = m.posterior(&x).map_err(e)?;
        let (mut total, mut ks) = (0usize, 0usize);
        for j in 0..samples {
            let mut r = rng(81_000 + 100 * n as u64 + j);
            let mut s = post.initial_state().map_err(e)?;
            while post.remaining(&s) > 0 {
                let lp = post.log_conditionals(&s).map_err(e)?;
                let u: f64 = r.random();
                let mut acc = 0.0;
                let mut pick = lp.len() - 1;
                for (k, l) in lp.iter().enumerate() {
                    acc += l.exp();
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                post.advance(&mut s, pick).map_err(e)?;
            }
            total += s.g_evaluations();
            ks += s.num_clusters();
        }
        counts.push(total as f64 / samples as f64);
        mean_k.push(ks as f64 / samples as f64);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, counts.iter().sum::<f64>() / counts.len() as f64);
    let sxy: f64 = xs.iter().zip(&counts).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = counts.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);

    // same seed every round so each round does identical work; sizes interleaved
    let (x50, x100) = (three_blobs(50, 140), three_blobs(100, 190));
    let (mut t50, mut t100) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..5 {
        for (x, best) in [(&x50, &mut t50), (&x100, &mut t100)] {
            let start = Instant::now();
            m.sample_batch(x, 200, 91).map_err(e)?;
            *best = best.min(start.elapsed().as_secs_f64());
        }
    }
    let ratio = t100 / t50;
    Ok(outcome(
        r2 >= 0.99 && ratio <= 2.5,
        format!(
            "g evaluations per sample vs N: R^2 {r2:.5} (min 0.99), slope {:.2}, mean K {:.2}..{:.2}; wall clock N=100 / N=50 {ratio:.2} (max 2.5)",
            sxy / sxx,
            mean_k.iter().copied().fold(f64::INFINITY, f64::min),
            mean_k.iter().copied().fold(0.0, f64::max)
        ),
    ))
}

/// Up to three training reruns are allowed; they live in `nbp-rerun{1,2,3}`
/// and use other training seeds. The first passing run decides.
fn nbp_recovery_check() -> Result<Outcome, String> {
    let mut details = Vec::new();
    for i in 0..=3 {
        let (c, spec) = if i == 0 {
            trained("nbp", "nbp_sbm.json")?
        } else {
            let dir = format!("nbp-rerun{i}");
            if !artifacts().join(&dir).join("manifest.json").exists() {
                break;
            }
            trained(&dir, "nbp_sbm.json --set training.seed=<other>")?
        };
        let m = NbpModel::from_checkpoint(&c).map_err(e)?;
        let mut w = Worst::default();
        for seed in 0..40 {
            nbp_invariances(&m, 9000 + seed, 20, &mut w);
        }
        let tol = 1e-9;
        let inv = w.normalization <= tol && w.relabel <= tol && w.within <= tol && w.unassigned <= tol;
        let rep = nbp_recovery(&m, &spec, 50, 150, 91).map_err(e)?;
        let run = if i == 0 { "run".to_string() } else { format!("rerun {i}") };
        details.push(format!(
            "{run}: invariances normalization {:.1e}, relabel {:.1e}, within {:.1e}, unassigned {:.1e} (tol 1e-9), beam B=150 mean ARI {:.4}",
            w.normalization, w.relabel, w.within, w.unassigned, rep.mean_ari
        ));
        if inv && rep.mean_ari >= 0.8 {
            return Ok(outcome(true, format!("{} on 50 held-out graphs (min 0.8)", details.join("; "))));
        }
    }
    Ok(outcome(false, format!("{} on 50 held-out graphs (min 0.8)", details.join("; "))))
}

fn npt_reductions() -> Result<Outcome, String> {
    // zero decay against the clustering model, bit for bit
    let mut bitwise = true;
    for seed in 0..6u64 {
        let mut m = toy_npt(100 + seed, 0.5);
        m.force_zero_decay = true;
        let mut r = rng(200 + seed);
        let n = 4 + 3 * seed as usize;
        let x = random_points(&mut r, 2, n);
        let labels = sample_crp(1.2, n, &mut r);
        let mut ours = DecayedState::new(Arc::new(m.encode(&x).map_err(e)?));
        let mut theirs = ClusterState::new(&m.ncp, Arc::new(m.ncp.encode_points(&x).map_err(e)?));
        for &c in labels.labels() {
            let (a, b) = (ours.logits(&m).map_err(e)?, theirs.logits(&m.ncp).map_err(e)?);
            bitwise &= a.len() == b.len() && a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits());
            ours.advance(c).map_err(e)?;
            theirs.advance(&m.ncp, c).map_err(e)?;
        }
        bitwise &= m.log_prob(&x, &labels).map_err(e)?.to_bits() == m.ncp.log_prob(&x, &labels).map_err(e)?.to_bits();
    }

    // decayed sums from the recurrence against the explicit weighted sums
    let mut recurrence: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng(300 + seed);
        let b = r.random_range(0.01..4.0);
        let m = toy_npt(400 + seed, b);
        let n = r.random_range(1..20);
        let x = random_points(&mut r, 2, n);
        let labels = sample_crp(1.0, n, &mut r).into_inner();
        let enc = m.ncp.encode_points(&x).map_err(e)?;
        let mut s = DecayedState::new(Arc::new(m.encode(&x).map_err(e)?));
        let decay = m.decay();
        for t in 0..n {
            let k = labels[..t].iter().max().map_or(0, |v| v + 1);
            for c in 0..k {
                let mut direct = vec![0.0; m.ncp.d_h()];
                for i in (0..t).filter(|&i| labels[i] == c) {
                    let wgt = (-decay * (t - i) as f64).exp();
                    for (a, v) in direct.iter_mut().zip(enc.h(i)) {
                        *a += wgt * v;
                    }
                }
                recurrence = recurrence.max(max_abs(&s.decayed_sums()[c], &direct));
            }
            let mut q = vec![0.0; m.ncp.d_q()];
            for i in t + 1..n {
                let wgt = (-decay * (i - t) as f64).exp();
                for (a, v) in q.iter_mut().zip(enc.q(i)) {
                    *a += wgt * v;
                }
            }
            recurrence = recurrence.max(max_abs(&s.future_summary(), &q));
            s.advance(labels[t]).map_err(e)?;
        }
    }

    // the decay stays positive through training
    let gen = GenerativeSpec::DriftingParticles(ParticleSpec { t_range: NRange::new(5, 12).map_err(e)?, ..Default::default() });
    let mut m = toy_npt(500, npt::DEFAULT_INITIAL_DECAY);
    let opts = TrainOptions {
        iterations: 1000,
        replicas: 4,
        seed: 501,
        adam: combinfer_core::adam::AdamConfig { learning_rate: 1e-2, ..Default::default() },
        ..Default::default()
    };
    let (mut steps, mut min_b, mut all_positive) = (0usize, f64::INFINITY, true);
    let mut hook = |_: usize, _: f64, mm: &NptModel| -> combinfer_core::Result<()> {
        steps += 1;
        all_positive &= mm.decay() > 0.0;
        min_b = min_b.min(mm.decay());
        Ok(())
    };
    npt::train_npt(&mut m, &gen, &opts, Some(&mut hook)).map_err(e)?;
    let positive = steps == 1000 && all_positive;
    Ok(outcome(
        bitwise && recurrence <= 1e-9 && positive,
        format!(
            "b=0 logits bitwise equal {bitwise}; recurrence max deviation {recurrence:.1e} (tol 1e-9); {steps} training steps, min b {min_b:.4e} (> 0), final b {:.4}",
            m.decay()
        ),
    ))
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("structural invariants", structural),
        ("gradient finite differences", gradients),
        ("NCP small-N oracle", small_n),
        ("Geweke K histogram and mean-K curve", geweke),
        ("exchangeability ratio", exchangeability),
        ("probe-line conditional", probe),
        ("NPP exact probabilities", npp_oracle),
        ("complexity", complexity),
        ("NBP invariance and recovery", nbp_recovery_check),
        ("NPT reductions", npt_reductions),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail),
            Err(msg) => (false, msg),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {name}: {} [{:.1}s] {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
