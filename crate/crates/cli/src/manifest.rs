use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Value,
    pub version: &'static str,
    pub master_seed: Option<u64>,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

/// Collects output paths for one manifest.
pub struct Run {
    command: String,
    parameters: Value,
    master_seed: Option<u64>,
    out_dir: PathBuf,
    outputs: Vec<String>,
    start: Instant,
}

impl Run {
    pub fn new(command: &str, parameters: Value, master_seed: Option<u64>, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            command: command.to_string(),
            parameters,
            master_seed,
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            start: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.display().to_string());
        Ok(path)
    }

    /// Registers a file the caller writes itself, e.g. the JSON that embeds
    /// this manifest.
    pub fn claim(&mut self, name: &str) -> PathBuf {
        let path = self.path(name);
        self.outputs.push(path.display().to_string());
        path
    }

    pub fn finish(self) -> RunManifest {
        RunManifest {
            command: self.command,
            parameters: self.parameters,
            version: env!("CARGO_PKG_VERSION"),
            master_seed: self.master_seed,
            outputs: self.outputs,
            duration_secs: self.start.elapsed().as_secs_f64(),
        }
    }

    /// Writes `<command>_manifest.json` listing every output.
    pub fn finish_to_file(self, name: &str) -> Result<PathBuf> {
        let path = self.path(name);
        let manifest = self.finish();
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
