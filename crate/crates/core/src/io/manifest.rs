use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub loss_log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub status: RunStatus,
    pub iterations_completed: usize,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub train_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// `git describe` of the working directory when available, else the crate version.
pub fn version_string() -> String {
    let pkg = format!("v{}", env!("CARGO_PKG_VERSION"));
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| format!("{pkg}-{}", s.trim()))
        .unwrap_or(pkg)
}

impl RunManifest {
    pub fn started(task: &str, config_hash: String, seed: u64) -> Self {
        RunManifest {
            task: task.to_string(),
            config_hash,
            seed,
            version: version_string(),
            loss_log: None,
            checkpoint: None,
            status: RunStatus::Running,
            iterations_completed: 0,
            started_unix: unix_now(),
            finished_unix: None,
            train_seconds: None,
        }
    }

    pub fn finish(&mut self, status: RunStatus, iterations: usize, seconds: f64) {
        self.status = status;
        self.iterations_completed = iterations;
        self.finished_unix = Some(unix_now());
        self.train_seconds = Some(seconds);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Streams `iter,loss` rows.
pub struct LossCsvWriter {
    inner: csv::Writer<std::fs::File>,
}

impl LossCsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(["iter", "loss"])?;
        Ok(LossCsvWriter { inner })
    }

    pub fn push(&mut self, iteration: usize, loss: f64) -> Result<()> {
        self.inner.write_record([iteration.to_string(), format!("{loss}")])?;
        if iteration % 100 == 0 {
            self.inner.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let (i, l): (usize, f64) = rec?;
        out.push((i, l));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_and_loss_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::started("ncp", "ab".into(), 4);
        m.finish(RunStatus::Completed, 10, 1.5);
        let p = dir.path().join("manifest.json");
        m.save(&p).unwrap();
        assert_eq!(RunManifest::load(&p).unwrap(), m);

        let lp = dir.path().join("loss.csv");
        let mut w = LossCsvWriter::create(&lp).unwrap();
        w.push(1, 2.5).unwrap();
        w.push(2, 0.1 + 0.2).unwrap();
        w.finish().unwrap();
        assert_eq!(read_loss_csv(&lp).unwrap(), vec![(1, 2.5), (2, 0.1 + 0.2)]);
    }
}
