use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use satlms::{IntegratorConfig, SimConfig, SystemParams};

/// Everything needed to replay a run: resolved inputs plus provenance.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub params: Option<SystemParams>,
    pub integrator: Option<IntegratorConfig>,
    pub sim: Option<SimConfig>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub duration_s: f64,
    pub extra: serde_json::Value,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, started: Instant) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            params: None,
            integrator: None,
            sim: None,
            seed: None,
            threads: rayon::current_num_threads(),
            duration_s: 0.0,
            extra: serde_json::Value::Null,
            started: Some(started),
        }
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        if let Some(t) = self.started {
            self.duration_s = t.elapsed().as_secs_f64();
        }
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }
}
