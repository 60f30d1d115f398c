use std::path::Path;

use anyhow::Result;
use combinfer_core::assignment::Assignment;
use combinfer_core::checkpoint::Checkpoint;
use combinfer_core::generative::{GenerativeSpec, LabeledDataset};
use combinfer_core::nbp::NbpModel;
use combinfer_core::ncp::NcpModel;
use combinfer_core::npp::NppModel;
use combinfer_core::npt::NptModel;
use combinfer_core::Error;
use serde_json::{json, Value};

pub enum AnyModel {
    Ncp(NcpModel),
    Nbp(NbpModel),
    Npp(NppModel),
    Npt(NptModel),
}

pub struct Loaded {
    pub model: AnyModel,
    /// Generative block recorded at training time, if any.
    pub generative: Option<GenerativeSpec>,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let c = Checkpoint::load(path)?;
    let model = match c.task.as_str() {
        combinfer_core::ncp::TASK => AnyModel::Ncp(NcpModel::from_checkpoint(&c)?),
        combinfer_core::nbp::TASK => AnyModel::Nbp(NbpModel::from_checkpoint(&c)?),
        combinfer_core::npp::TASK => AnyModel::Npp(NppModel::from_checkpoint(&c)?),
        combinfer_core::npt::TASK => AnyModel::Npt(NptModel::from_checkpoint(&c)?),
        other => return Err(Error::Format(format!("unknown checkpoint task {other:?}")).into()),
    };
    let generative = c
        .config
        .get("generative")
        .and_then(|g| serde_json::from_value(g.clone()).ok());
    Ok(Loaded { model, generative })
}

impl AnyModel {
    pub fn task(&self) -> &'static str {
        match self {
            AnyModel::Ncp(_) => "ncp",
            AnyModel::Nbp(_) => "nbp",
            AnyModel::Npp(_) => "npp",
            AnyModel::Npt(_) => "npt",
        }
    }

    fn mismatch(&self, ds: &LabeledDataset) -> anyhow::Error {
        Error::Config(format!("a {} checkpoint cannot read {} data", self.task(), ds.kind_name())).into()
    }

    /// `count` iid samples (stream `(seed, "sample", j)`) or, with `beam`,
    /// the beam results in decreasing log-probability. One JSON object each.
    pub fn draw(&self, ds: &LabeledDataset, count: usize, beam: Option<usize>, seed: u64) -> Result<Vec<Value>> {
        let labels = |v: Vec<combinfer_core::sequential::PosteriorSample<Assignment>>| -> Vec<Value> {
            v.into_iter()
                .map(|s| json!({ "labels": s.labels.to_one_based(), "log_prob": s.log_prob }))
                .collect()
        };
        Ok(match (self, ds) {
            (AnyModel::Ncp(m), LabeledDataset::Clustering { points, .. }) => labels(match beam {
                Some(b) => m.beam_search(points, b)?,
                None => m.sample_batch(points, count, seed)?,
            }),
            (AnyModel::Npt(m), LabeledDataset::Particles { points, .. }) => labels(match beam {
                Some(b) => m.beam_search(points, b)?,
                None => m.sample_batch(points, count, seed)?,
            }),
            (AnyModel::Nbp(m), LabeledDataset::Graph { adjacency, .. }) => labels(match beam {
                Some(b) => m.beam_search(adjacency, b)?,
                None => m.sample_batch(adjacency, count, seed)?,
            }),
            (AnyModel::Npp(m), LabeledDataset::Pairs { x, y, .. }) => {
                let out = match beam {
                    Some(b) => m.beam_search(x, y, b)?,
                    None => m.sample_batch(x, y, count, seed)?,
                };
                out.into_iter()
                    .map(|s| json!({ "perm": s.labels.to_one_based(), "log_prob": s.log_prob }))
                    .collect()
            }
            _ => return Err(self.mismatch(ds)),
        })
    }
}
