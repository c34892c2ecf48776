use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

/// Audit record of one command invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    /// Seconds per stage, summed over scans.
    pub timing: BTreeMap<String, f64>,
    pub counts: Counts,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub results: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub scans: usize,
    pub points: usize,
    pub rejected_points: usize,
}

impl RunManifest {
    pub fn new(command: &str, config: String, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            config,
            threads,
            ..Self::default()
        }
    }

    pub fn add_time(&mut self, stage: &str, d: Duration) {
        *self.timing.entry(stage.to_string()).or_default() += d.as_secs_f64();
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
    }
}
