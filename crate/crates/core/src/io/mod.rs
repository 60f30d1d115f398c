//! Run configuration, manifests and file formats.

mod config;
mod dataset;
mod manifest;

pub use dataset::{DatasetFile, DatasetKind};
pub use config::{apply_override, Architecture, Paths, RunConfig, Task, TrainingConfig};
pub use manifest::{read_loss_csv, unix_now, version_string, LossCsvWriter, RunManifest, RunStatus};
