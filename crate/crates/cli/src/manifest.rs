//! Reproducibility record written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub v: u32,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub args: Vec<String>,
    /// File name to hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub unix_time: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Result<Self> {
        let versions = [
            ("ordinal-depth-cli", env!("CARGO_PKG_VERSION")),
            ("ordinal-depth", ordinal_depth::VERSION),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Ok(Self {
            v: 1,
            command: command.to_string(),
            config_sha256: cfg.digest()?,
            seed: cfg.seed,
            versions,
            args: std::env::args().collect(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    /// Records a file, or every file directly inside a directory.
    fn record(map: &mut BTreeMap<String, String>, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(path)?.collect::<std::io::Result<_>>()?;
            entries.sort_by_key(|e| e.path());
            for e in entries {
                if e.path().is_file() && e.file_name() != "manifest.json" {
                    map.insert(e.path().display().to_string(), sha256_file(&e.path())?);
                }
            }
        } else {
            map.insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        Self::record(&mut self.inputs, path)?;
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        Self::record(&mut self.outputs, path)?;
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))
    }
}
