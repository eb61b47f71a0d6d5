use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use mls_core::ExperimentConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

/// Fully resolved command parameters. Everything else lives in `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Train {
        seeds: Vec<u64>,
        with_cma_state: bool,
    },
    Infer {
        checkpoint: PathBuf,
        seed: u64,
        frames_every: usize,
    },
    Ablate {
        checkpoint: PathBuf,
        seeds: Vec<u64>,
    },
    Analyze {
        trajectory: PathBuf,
        n_max: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub invocation: Invocation,
    pub config: ExperimentConfig,
    pub checkpoints: Vec<PathBuf>,
    /// Relative to the output directory.
    pub outputs: Vec<PathBuf>,
    pub argv: Vec<String>,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(invocation: Invocation, config: ExperimentConfig) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            config,
            checkpoints: Vec::new(),
            outputs: Vec::new(),
            argv: std::env::args().collect(),
            threads: rayon::current_num_threads(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            wall_seconds: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => anyhow::anyhow!("file not found: {}", path.display()),
            _ => anyhow::anyhow!("cannot read {}: {e}", path.display()),
        })?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }
}
