use super::{npp_nll_and_grads_replicas, NppModel};
use crate::assignment::Permutation;
use crate::error::{Error, Result};
use crate::generative::{sample_noisy_pairs, GenerativeSpec, LabeledDataset, PointSet};
use crate::rng::StreamRng;
use crate::train::{self, Hook, TrainOptions, Trainable, TrainingLog};

impl Trainable for NppModel {
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.networks_mut().into_iter().map(|n| n.params_mut()).collect()
    }
}

/// One size N, then `replicas` pair datasets of that size, each with its
/// own uniformly drawn matching.
pub fn draw_pairs_minibatch(gen: &GenerativeSpec, replicas: usize, rng: &mut StreamRng) -> Result<Vec<(PointSet, PointSet, Permutation)>> {
    let GenerativeSpec::NoisyPairs2d(spec) = gen else {
        return Err(Error::Config(format!("pair training needs noisy_pairs_2d, got {}", gen.kind_name())));
    };
    let n = spec.n_range.sample(rng);
    (0..replicas)
        .map(|_| match sample_noisy_pairs(n, spec.prior_var, spec.noise_var, rng) {
            LabeledDataset::Pairs { x, y, truth: Some(t) } => Ok((x, y, t)),
            _ => unreachable!("sample_noisy_pairs always returns labeled pairs"),
        })
        .collect()
}

pub fn train_npp(model: &mut NppModel, gen: &GenerativeSpec, opts: &TrainOptions, hook: Option<Hook<'_, NppModel>>) -> Result<TrainingLog> {
    gen.validate()?;
    if !matches!(gen, GenerativeSpec::NoisyPairs2d(_)) {
        return Err(Error::Config(format!("pair training needs noisy_pairs_2d, got {}", gen.kind_name())));
    }
    if model.d_x() != 2 {
        return Err(Error::Config(format!("model reads {}-dimensional points, data are 2-dimensional", model.d_x())));
    }
    let replicas = opts.replicas.max(1);
    train::run(
        model,
        opts,
        |m, rng| {
            let batch = draw_pairs_minibatch(gen, replicas, rng)?;
            let (loss, grads) = npp_nll_and_grads_replicas(m, &batch)?;
            Ok((loss, grads.blocks().iter().map(|b| b.to_vec()).collect()))
        },
        hook,
    )
}
