//! Run manifest: config echo, scalar results, timings and the output file
//! inventory with checksums.  Written atomically at run end.  All numeric
//! artifacts of a run are bit-stable for a fixed config and seed; the timing
//! block is the one part that varies between reruns.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::format::write_atomic;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    pub scalars: BTreeMap<String, serde_json::Value>,
    pub timings_s: BTreeMap<String, f64>,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Manifest {
        Manifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            scalars: BTreeMap::new(),
            timings_s: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn scalar(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.scalars.insert(key.to_string(), value.into());
    }

    pub fn timing(&mut self, key: &str, started: Instant) {
        self.timings_s
            .insert(key.to_string(), started.elapsed().as_secs_f64());
    }

    /// Hash and register a file that was just written.
    pub fn record_file(&mut self, out_dir: &Path, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let rel = path
            .strip_prefix(out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .to_string();
        self.outputs.push(OutputEntry {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: hex,
        });
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
