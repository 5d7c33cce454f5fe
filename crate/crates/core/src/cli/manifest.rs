//! Run manifests: one append-only `manifest.json` per output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub options: BTreeMap<String, Value>,
    /// Output path relative to the manifest's directory → SHA-256 hex.
    pub artifacts: BTreeMap<String, String>,
    pub version: String,
    pub started_unix_s: f64,
    pub duration_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Collects inputs, options and outputs while a command runs.
pub struct ManifestBuilder {
    command: String,
    inputs: Vec<String>,
    options: BTreeMap<String, Value>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            inputs: Vec::new(),
            options: BTreeMap::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn option(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.options.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
        self
    }

    pub fn output(&mut self, path: PathBuf) -> &mut Self {
        self.outputs.push(path);
        self
    }

    /// Hashes the outputs and appends the record to `dir/manifest.json`.
    pub fn finish(self, dir: &Path) -> Result<RunManifest, CliError> {
        let mut artifacts = BTreeMap::new();
        for p in &self.outputs {
            let key = p.strip_prefix(dir).unwrap_or(p).display().to_string();
            artifacts.insert(key, sha256_file(p)?);
        }
        let run = RunManifest {
            command: self.command,
            inputs: self.inputs,
            options: self.options,
            artifacts,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_s: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            duration_s: self.clock.elapsed().as_secs_f64(),
        };
        append(dir, &run)?;
        Ok(run)
    }
}

/// Every run ever recorded in `dir`, oldest first.
pub fn read_manifest(dir: &Path) -> Result<Vec<RunManifest>, CliError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: malformed manifest: {e}", path.display())))
}

fn append(dir: &Path, run: &RunManifest) -> Result<(), CliError> {
    let mut runs = read_manifest(dir)?;
    runs.push(run.clone());
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&runs).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appends_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.txt");
        std::fs::write(&out, "abc").unwrap();
        for _ in 0..2 {
            let mut m = ManifestBuilder::new("solve");
            m.input(Path::new("case.m")).option("model", "dc").output(out.clone());
            m.finish(dir.path()).unwrap();
        }
        let runs = read_manifest(dir.path()).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(
            runs[0].artifacts["a.txt"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(runs[1].options["model"], Value::from("dc"));
    }
}
