//! The run manifest written next to every file-producing command's output:
//! enough to re-run the command bit-identically (wall-clock aside).

use std::path::{Path, PathBuf};
use std::time::Instant;

use adass_core::{io, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// The invocation, argv[0] included.
    pub command: Vec<String>,
    /// Fully resolved configuration (flags and config file merged).
    pub config: serde_json::Value,
    pub seed: u64,
    pub stream: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub threads: usize,
    pub strict: bool,
    pub wall_clock_seconds: f64,
    pub version: String,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(config: serde_json::Value, seed: u64, stream: u64, threads: usize, strict: bool) -> Self {
        ManifestBuilder {
            started: Instant::now(),
            manifest: RunManifest {
                command: std::env::args().collect(),
                config,
                seed,
                stream,
                inputs: Vec::new(),
                outputs: Vec::new(),
                threads,
                strict,
                wall_clock_seconds: 0.0,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    /// Writes `manifest.json` into `dir` atomically.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let path = dir.join("manifest.json");
        io::atomic_write_json(&path, &self.manifest)?;
        Ok(path)
    }
}
