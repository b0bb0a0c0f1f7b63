//! Run manifests and atomic output writes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use teleqa_core::Error;

use crate::error::Result;

pub const RUN_MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command and get the same bytes out: the
/// resolved arguments, the seed, input and output digests and the format
/// versions in effect. Carries no timestamps, so reruns produce an
/// identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(Error::from)?;
        let canonical = serde_json::to_vec(&config).map_err(Error::from)?;
        let mut versions = BTreeMap::new();
        versions.insert("teleqa".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert(
            "feature_config".to_string(),
            teleqa_core::features::FEATURE_CONFIG_VERSION.to_string(),
        );
        versions.insert(
            "model_schema".to_string(),
            teleqa_core::svr::MODEL_SCHEMA_VERSION.to_string(),
        );
        versions.insert(
            "manifest_schema".to_string(),
            teleqa_core::dataset::MANIFEST_SCHEMA_VERSION.to_string(),
        );
        Ok(RunManifest {
            schema_version: RUN_MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            config,
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            versions,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<String> {
        let sha256 = sha256_file(path)?;
        self.input_digest(path, sha256.clone());
        Ok(sha256)
    }

    pub fn input_digest(&mut self, path: &Path, sha256: String) {
        if !self.inputs.iter().any(|d| d.path == path) {
            self.inputs.push(FileDigest {
                path: path.to_path_buf(),
                sha256,
            });
        }
    }

    pub fn output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.retain(|d| d.path != path);
        self.outputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_bytes(bytes),
        });
    }

    /// Writes `bytes` atomically and records the output.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.output(path, bytes);
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut sorted = self.clone();
        sorted.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        sorted.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(to_pretty_json(&sorted)?)
    }
}

pub fn to_pretty_json(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// `<path>.run.json`, next to the primary output.
pub fn default_run_manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    primary.with_file_name(name)
}
