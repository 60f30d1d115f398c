use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adam::{AdamConfig, DEFAULT_LEARNING_RATE};
use crate::error::{Error, Result};
use crate::generative::GenerativeSpec;
use crate::train::{TrainOptions, DEFAULT_REPLICAS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ncp,
    Nbp,
    Npp,
    Npt,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Ncp => "ncp",
            Task::Nbp => "nbp",
            Task::Npp => "npp",
            Task::Npt => "npt",
        }
    }

    /// Full-size layer widths per network.
    pub fn default_architecture(self) -> Architecture {
        let w = |v: &[usize]| v.to_vec();
        let mut a = BTreeMap::new();
        match self {
            Task::Ncp | Task::Npt => {
                a.insert("q".into(), w(&[2, 64, 64, 64, 256]));
                a.insert("g".into(), w(&[3, 128, 128, 128, 128, 256]));
                a.insert("f".into(), w(&[512, 128, 128, 128, 128, 1]));
            }
            Task::Nbp => {
                a.insert("t".into(), w(&[6, 64, 64, 64, 256]));
                a.insert("h".into(), w(&[262, 64, 64, 64, 256]));
                a.insert("q".into(), w(&[262, 64, 64, 64, 256]));
                a.insert("g".into(), w(&[256, 64, 64, 64, 256]));
                a.insert("f".into(), w(&[512, 64, 64, 64, 64, 1]));
            }
            Task::Npp => {
                a.insert("g".into(), w(&[2, 64, 64, 64, 256]));
                a.insert("R".into(), w(&[768, 64, 64, 64, 1]));
            }
        }
        a
    }

    fn generative_matches(self, gen: &GenerativeSpec) -> bool {
        matches!(
            (self, gen),
            (Task::Ncp, GenerativeSpec::CrpGauss2d(_) | GenerativeSpec::MfmGauss2d(_))
                | (Task::Nbp, GenerativeSpec::SbmBetaBernoulli(_))
                | (Task::Npp, GenerativeSpec::NoisyPairs2d(_))
                | (Task::Npt, GenerativeSpec::DriftingParticles(_))
        )
    }
}

pub type Architecture = BTreeMap<String, Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_replicas")]
    pub replica_count: usize,
    pub seed: Option<u64>,
    /// Write an intermediate checkpoint every this many iterations (0 = never).
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_iterations() -> usize {
    20_000
}
fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_replicas() -> usize {
    DEFAULT_REPLICAS
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            iterations: default_iterations(),
            learning_rate: default_lr(),
            replica_count: default_replicas(),
            seed: None,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub generative: GenerativeSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Overrides of the task defaults, by network name.
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<serde_json::Value> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    /// Task defaults with the configured overrides applied.
    pub fn resolved_architecture(&self) -> Result<Architecture> {
        let mut arch = self.task.default_architecture();
        for (name, widths) in &self.architecture {
            let known = arch.contains_key(name) || (matches!(self.task, Task::Ncp | Task::Npt) && name == "h");
            if !known {
                return Err(Error::Config(format!("{} has no network named {name:?}", self.task.name())));
            }
            arch.insert(name.clone(), widths.clone());
        }
        Ok(arch)
    }

    pub fn seed(&self) -> Result<u64> {
        self.training
            .seed
            .ok_or_else(|| Error::Config("training.seed is required".into()))
    }

    /// Everything that can be checked without touching data or weights.
    pub fn validate(&self) -> Result<()> {
        self.generative.validate()?;
        if !self.task.generative_matches(&self.generative) {
            return Err(Error::Config(format!(
                "task {} cannot train on {}",
                self.task.name(),
                self.generative.kind_name()
            )));
        }
        self.seed()?;
        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", t.learning_rate)));
        }
        if t.replica_count == 0 {
            return Err(Error::Config("replica_count must be at least 1".into()));
        }
        let arch = self.resolved_architecture()?;
        check_wiring(self.task, &arch)
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        Ok(TrainOptions {
            iterations: self.training.iterations,
            replicas: self.training.replica_count,
            seed: self.seed()?,
            adam: AdamConfig {
                learning_rate: self.training.learning_rate,
                ..AdamConfig::default()
            },
            reorder: true,
        })
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_wiring(task: Task, arch: &Architecture) -> Result<()> {
    let get = |n: &str| -> Result<&Vec<usize>> {
        arch.get(n).ok_or_else(|| Error::Config(format!("missing network {n:?}")))
    };
    for (name, w) in arch {
        if w.len() < 2 || w.contains(&0) {
            return Err(Error::Config(format!("network {name:?} needs at least two positive widths, got {w:?}")));
        }
    }
    let first = |w: &Vec<usize>| w[0];
    let last = |w: &Vec<usize>| *w.last().expect("checked");
    let expect = |what: String, got: usize, want: usize| -> Result<()> {
        if got == want {
            Ok(())
        } else {
            Err(Error::Config(format!("{what}: width {got}, wiring requires {want}")))
        }
    };
    match task {
        Task::Ncp | Task::Npt => {
            let (q, g, f) = (get("q")?, get("g")?, get("f")?);
            expect("q input".into(), first(q), 2)?;
            let d_h = match arch.get("h") {
                Some(h) => {
                    expect("h input".into(), first(h), 2)?;
                    last(h)
                }
                None => 3,
            };
            expect("g input".into(), first(g), d_h)?;
            expect("f input".into(), first(f), last(g) + last(q))?;
            expect("f output".into(), last(f), 1)?;
        }
        Task::Nbp => {
            let (t, h, q, g, f) = (get("t")?, get("h")?, get("q")?, get("g")?, get("f")?);
            expect("t input".into(), first(t), 6)?;
            expect("h input".into(), first(h), last(t) + 6)?;
            expect("q input".into(), first(q), last(t) + 6)?;
            expect("g input".into(), first(g), last(h))?;
            expect("f input".into(), first(f), last(g) + last(q))?;
            expect("f output".into(), last(f), 1)?;
        }
        Task::Npp => {
            let (g, r) = (get("g")?, get("R")?);
            expect("g input".into(), first(g), 2)?;
            expect("R input".into(), first(r), 3 * last(g))?;
            expect("R output".into(), last(r), 1)?;
        }
    }
    Ok(())
}

/// Applies `a.b.c=value` to a JSON tree. The value is parsed as JSON when it
/// parses, otherwise taken as a string.
pub fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty path segment in {key:?}")));
        }
        if !node.is_object() {
            if node.is_null() {
                *node = serde_json::Value::Object(Default::default());
            } else {
                return Err(Error::Config(format!("{key:?}: {part:?} is not inside an object")));
            }
        }
        let obj = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(serde_json::Value::Null);
    }
    unreachable!("split yields at least one part")
}
