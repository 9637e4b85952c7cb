use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub elapsed_seconds: f64,
    pub output_paths: Vec<String>,
    pub config: serde_json::Value,
}

/// SHA-256 of the config serialized as JSON with sorted keys.
pub fn config_hash(config: &serde_json::Value) -> String {
    // serde_json maps are ordered by key, so this text is canonical
    let text = serde_json::to_string(config).expect("json value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub struct Run {
    command: &'static str,
    seed: u64,
    config: serde_json::Value,
    started: DateTime<Utc>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start<C: Serialize>(command: &'static str, seed: u64, config: &C) -> Self {
        Self {
            command,
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            started: Utc::now(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::write(path, bytes)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> std::io::Result<PathBuf> {
        let finished = Utc::now();
        let path = out_dir.join("manifest.json");
        self.outputs.push(path.clone());
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_hash: config_hash(&self.config),
            base_seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished: finished.to_rfc3339_opts(SecondsFormat::Millis, true),
            elapsed_seconds: (finished - self.started).num_milliseconds() as f64 / 1000.0,
            output_paths: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            config: self.config,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
