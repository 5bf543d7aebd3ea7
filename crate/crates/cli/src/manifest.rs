//! Run manifest: config hash, tool version and per-stage file digests.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::formats::{file_digest, string_digest, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_json: &str) -> RunManifest {
        RunManifest {
            config_hash: string_digest(config_json),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stages: Vec::new(),
        }
    }

    /// Continue an existing manifest only when it was produced by the same
    /// config; otherwise start fresh.
    pub fn load_or_new(dir: &Path, config_json: &str) -> anyhow::Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let m: RunManifest = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if m.config_hash == string_digest(config_json) {
                return Ok(m);
            }
        }
        Ok(RunManifest::new(config_json))
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

/// Tracks one stage's inputs/outputs and elapsed time.
pub struct StageGuard {
    stage: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    started: Instant,
}

impl StageGuard {
    pub fn new(stage: &str) -> StageGuard {
        StageGuard {
            stage: stage.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.outputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn finish(self, manifest: &mut RunManifest) {
        manifest.stages.push(StageRecord {
            stage: self.stage,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_ms: self.started.elapsed().as_millis() as u64,
        });
    }
}
