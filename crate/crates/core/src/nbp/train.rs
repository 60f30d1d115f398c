use rand::seq::SliceRandom;

use super::{nbp_nll_and_grads_replicas, NbpModel};
use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::generative::{Adjacency, GenerativeSpec, LabeledDataset};
use crate::rng::StreamRng;
use crate::train::{self, Hook, TrainOptions, Trainable, TrainingLog};

impl Trainable for NbpModel {
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.networks_mut().into_iter().map(|n| n.params_mut()).collect()
    }
}

/// One size, one label vector, `replicas` graphs given those labels (each
/// with its own block densities), all sharing one random row order.
pub fn draw_graph_minibatch(gen: &GenerativeSpec, replicas: usize, reorder: bool, rng: &mut StreamRng) -> Result<(Vec<Adjacency>, Assignment)> {
    let n = gen.size_range().sample(rng);
    let labels = gen.sample_labels(n, rng)?;
    let mut order: Vec<usize> = (0..n).collect();
    if reorder {
        order.shuffle(rng);
    }
    let mut graphs = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        match gen.sample_given_labels(&labels, rng)? {
            LabeledDataset::Graph { adjacency, .. } => graphs.push(adjacency.reordered(&order)),
            other => {
                return Err(Error::Config(format!("block training needs graphs, got {}", other.kind_name())))
            }
        }
    }
    Ok((graphs, labels.permuted(&order)))
}

pub fn train_nbp(model: &mut NbpModel, gen: &GenerativeSpec, opts: &TrainOptions, hook: Option<Hook<'_, NbpModel>>) -> Result<TrainingLog> {
    if !matches!(gen, GenerativeSpec::SbmBetaBernoulli(_)) {
        return Err(Error::Config(format!("block training needs sbm_beta_bernoulli, got {}", gen.kind_name())));
    }
    gen.validate()?;
    let replicas = opts.replicas.max(1);
    train::run(
        model,
        opts,
        |m, rng| {
            let (graphs, truth) = draw_graph_minibatch(gen, replicas, opts.reorder, rng)?;
            let (loss, grads) = nbp_nll_and_grads_replicas(m, &graphs, &truth)?;
            Ok((loss, grads.blocks().iter().map(|b| b.to_vec()).collect()))
        },
        hook,
    )
}
