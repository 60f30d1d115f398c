use super::{npt_nll_and_grads_replicas, NptModel};
use crate::assignment::Assignment;
use crate::error::{Error, Result};
use crate::generative::{GenerativeSpec, LabeledDataset, PointSet};
use crate::rng::StreamRng;
use crate::train::{self, Hook, TrainOptions, Trainable, TrainingLog};

impl Trainable for NptModel {
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.ncp.networks_mut().into_iter().map(|n| n.params_mut()).collect();
        v.push(std::slice::from_mut(&mut self.decay_raw));
        v
    }
}

/// One horizon, one label sequence, `replicas` track sets given those
/// labels. Time order is kept: shuffling would destroy the lags.
pub fn draw_track_minibatch(gen: &GenerativeSpec, replicas: usize, rng: &mut StreamRng) -> Result<(Vec<PointSet>, Assignment)> {
    let n = gen.size_range().sample(rng);
    let labels = gen.sample_labels(n, rng)?;
    let mut sets = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        match gen.sample_given_labels(&labels, rng)? {
            LabeledDataset::Particles { points, .. } => sets.push(points),
            other => {
                return Err(Error::Config(format!("tracking needs particle datasets, got {}", other.kind_name())))
            }
        }
    }
    Ok((sets, labels))
}

/// `opts.reorder` is ignored.
pub fn train_npt(model: &mut NptModel, gen: &GenerativeSpec, opts: &TrainOptions, hook: Option<Hook<'_, NptModel>>) -> Result<TrainingLog> {
    if !matches!(gen, GenerativeSpec::DriftingParticles(_)) {
        return Err(Error::Config(format!("{} is not a particle model", gen.kind_name())));
    }
    if model.d_x() != 2 {
        return Err(Error::Config(format!("model reads {}-dimensional points, data are 2-dimensional", model.d_x())));
    }
    if model.force_zero_decay {
        return Err(Error::Config("training with the decay forced to zero is not supported".into()));
    }
    gen.validate()?;
    let replicas = opts.replicas.max(1);
    train::run(
        model,
        opts,
        |m, rng| {
            let (sets, truth) = draw_track_minibatch(gen, replicas, rng)?;
            let (loss, grads) = npt_nll_and_grads_replicas(m, &sets, &truth)?;
            Ok((loss, grads.blocks().iter().map(|b| b.to_vec()).collect()))
        },
        hook,
    )
}
