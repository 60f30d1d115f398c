//! Checkpoint files: a magic line, a one-line JSON header naming each
//! network and any scalar parameters, then `weights <name> <count>` blocks
//! of floats printed with 17 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Network, NetworkSpec, ParameterStore};

pub const MAGIC: &str = "COMBINFER-CKPT v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    task: String,
    networks: Vec<NetworkEntry>,
    #[serde(default)]
    scalars: BTreeMap<String, f64>,
    #[serde(default)]
    config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub task: String,
    pub networks: Vec<(String, Network)>,
    pub scalars: BTreeMap<String, f64>,
    /// Free-form provenance: generative config, training options, seed.
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn new(task: impl Into<String>) -> Self {
        Checkpoint {
            task: task.into(),
            networks: Vec::new(),
            scalars: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }

    pub fn network(&self, name: &str) -> Option<&Network> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn require_network(&self, name: &str) -> Result<Network> {
        self.network(name)
            .cloned()
            .ok_or_else(|| Error::Format(format!("checkpoint has no network named {name:?}")))
    }

    pub fn require_task(&self, task: &str) -> Result<()> {
        if self.task == task {
            Ok(())
        } else {
            Err(Error::Format(format!("checkpoint holds a {:?} model, expected {task:?}", self.task)))
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let header = Header {
            task: self.task.clone(),
            networks: self
                .networks
                .iter()
                .map(|(name, net)| NetworkEntry {
                    name: name.clone(),
                    layer_widths: net.spec().layer_widths.clone(),
                    activation: net.spec().activation,
                })
                .collect(),
            scalars: self.scalars.clone(),
            config: self.config.clone(),
        };
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (name, net) in &self.networks {
            let values = net.params().as_slice();
            writeln!(w, "weights {name} {}", values.len())?;
            for chunk in values.chunks(8) {
                let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Format(format!("checkpoint ended before {what}")))
        };
        let magic = next_line("the magic line")?;
        if magic.trim_end() != MAGIC {
            return Err(Error::Format(format!("bad magic line {magic:?}")));
        }
        let header: Header = serde_json::from_str(&next_line("the header")?)?;
        let mut networks = Vec::new();
        for entry in &header.networks {
            let line = next_line("a weights block")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "weights" || parts[1] != entry.name {
                return Err(Error::Format(format!(
                    "expected `weights {} <count>`, got {line:?}",
                    entry.name
                )));
            }
            let count: usize = parts[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad weight count in {line:?}")))?;
            let spec = NetworkSpec {
                layer_widths: entry.layer_widths.clone(),
                activation: entry.activation,
            };
            spec.validate().map_err(|e| Error::Format(e.to_string()))?;
            if count != spec.param_count() {
                return Err(Error::Format(format!(
                    "network {} declares {count} weights, its widths need {}",
                    entry.name,
                    spec.param_count()
                )));
            }
            let mut values = Vec::with_capacity(count);
            while values.len() < count {
                let line = next_line("the end of a weights block")?;
                for tok in line.split_whitespace() {
                    values.push(
                        tok.parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad float {tok:?}")))?,
                    );
                }
            }
            if values.len() != count {
                return Err(Error::Format(format!("network {} has too many weights", entry.name)));
            }
            networks.push((entry.name.clone(), Network::new(spec, ParameterStore(values))?));
        }
        Ok(Checkpoint {
            task: header.task,
            networks,
            scalars: header.scalars,
            config: header.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        // write-then-rename so an interrupted save never truncates a good file
        let tmp = path.with_extension("tmp");
        self.write_to(fs::File::create(&tmp)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}
