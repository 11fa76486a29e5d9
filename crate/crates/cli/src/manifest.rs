use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

pub const RUN_FILE: &str = "run.json";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Hash of a file, or of a directory's files in sorted relative-path order
/// (each contributing its path and contents). Files named `skip` are ignored.
pub fn sha256_path(path: &Path, skip: &[&str]) -> anyhow::Result<String> {
    if path.is_file() {
        return Ok(sha256_bytes(&fs::read(path).with_context(|| format!("reading {}", path.display()))?));
    }
    let mut h = Sha256::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", path.display()))?;
        if !entry.file_type().is_file() || skip.iter().any(|s| entry.file_name() == *s) {
            continue;
        }
        let rel = entry.path().strip_prefix(path).unwrap_or(entry.path());
        let rel = rel.to_string_lossy().replace('\\', "/");
        h.update((rel.len() as u64).to_le_bytes());
        h.update(rel.as_bytes());
        let data = fs::read(entry.path())?;
        h.update((data.len() as u64).to_le_bytes());
        h.update(&data);
    }
    Ok(hex(&h.finalize()))
}

/// Provenance record written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> anyhow::Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_hash = sha256_bytes(serde_json::to_string(&config)?.as_bytes());
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            tags: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(name.to_string(), sha256_path(path, &[RUN_FILE])?);
        Ok(())
    }

    /// Records an output by its path relative to the manifest's directory.
    pub fn output(&mut self, rel: &str, path: &Path) -> anyhow::Result<()> {
        self.outputs.insert(rel.to_string(), sha256_path(path, &[RUN_FILE])?);
        Ok(())
    }

    pub fn tag(&mut self, key: &str, value: impl Into<String>) {
        self.tags.insert(key.to_string(), value.into());
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
    }
}
