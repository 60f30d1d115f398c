use rand::seq::SliceRandom;

use super::{nll_loss_and_grads_replicas, NcpModel};
use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::generative::{GenerativeSpec, LabeledDataset, PointSet};
use crate::rng::StreamRng;
use crate::train::{self, Hook, TrainOptions, Trainable, TrainingLog};

impl Trainable for NcpModel {
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.networks_mut().into_iter().map(|n| n.params_mut()).collect()
    }
}

/// One minibatch: a size, a label vector, `replicas` datasets given those
/// labels, all sharing one random point order.
pub fn draw_minibatch(gen: &GenerativeSpec, replicas: usize, reorder: bool, rng: &mut StreamRng) -> Result<(Vec<PointSet>, Assignment)> {
    let n = gen.size_range().sample(rng);
    let labels = gen.sample_labels(n, rng)?;
    let mut order: Vec<usize> = (0..n).collect();
    if reorder {
        order.shuffle(rng);
    }
    let mut sets = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        match gen.sample_given_labels(&labels, rng)? {
            LabeledDataset::Clustering { points, .. } => sets.push(points.reordered(&order)),
            other => {
                return Err(Error::Config(format!(
                    "cluster training needs point datasets, got {}",
                    other.kind_name()
                )))
            }
        }
    }
    Ok((sets, labels.permuted(&order)))
}

pub fn train(model: &mut NcpModel, gen: &GenerativeSpec, opts: &TrainOptions, hook: Option<Hook<'_, NcpModel>>) -> Result<TrainingLog> {
    if !matches!(gen, GenerativeSpec::CrpGauss2d(_) | GenerativeSpec::MfmGauss2d(_)) {
        return Err(Error::Config(format!("{} is not a point-clustering model", gen.kind_name())));
    }
    if model.d_x() != 2 {
        return Err(Error::Config(format!("model reads {}-dimensional points, data are 2-dimensional", model.d_x())));
    }
    gen.validate()?;
    let replicas = opts.replicas.max(1);
    train::run(
        model,
        opts,
        |m, rng| {
            let (sets, truth) = draw_minibatch(gen, replicas, opts.reorder, rng)?;
            let (loss, grads) = nll_loss_and_grads_replicas(m, &sets, &truth)?;
            Ok((loss, grads.blocks().iter().map(|b| b.to_vec()).collect()))
        },
        hook,
    )
}
