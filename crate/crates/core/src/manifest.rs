//! Stage manifests: what went in, what came out, under which configuration.
//!
//! Every CLI stage writes `<stage>.manifest.json` next to its outputs. A
//! downstream stage recomputes the config hash its upstream stage should
//! have recorded and refuses to run on a mismatch unless told otherwise.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    /// Hash of this stage's configuration and every upstream stage's.
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Full effective configuration; only part of it may enter the hash.
    pub config: serde_json::Value,
    /// Stage-specific summary (e.g. the eval species of a split).
    #[serde(default)]
    pub extra: serde_json::Value,
    /// Seconds since the Unix epoch. The only non-reproducible field.
    pub created_unix: u64,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// SHA-256 of the compact JSON form. `serde_json` maps are ordered by key,
/// so equal configurations hash equally regardless of field order.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    Ok(sha256_bytes(serde_json::to_string(&value)?.as_bytes()))
}

pub fn digest_files(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl Manifest {
    pub fn new(stage: &str, config_hash: String, config: serde_json::Value, seed: u64, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<Self> {
        Ok(Manifest {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            inputs: digest_files(inputs)?,
            outputs: digest_files(outputs)?,
            config,
            extra: serde_json::Value::Null,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    pub fn path_for(dir: &Path, stage: &str) -> PathBuf {
        dir.join(format!("{stage}.manifest.json"))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = Self::path_for(dir, &self.stage);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path, stage: &str) -> Result<Self> {
        let path = Self::path_for(dir, stage);
        if !path.exists() {
            return Err(Error::MissingArtifact { path });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fails if the recorded hash differs from `expected`, or if an output
    /// file changed since it was written.
    pub fn check(&self, expected: &str) -> Result<()> {
        if self.config_hash != expected {
            return Err(Error::ConfigMismatch {
                stage: self.stage.clone(),
                recorded: self.config_hash.clone(),
                expected: expected.to_string(),
            });
        }
        for out in &self.outputs {
            if out.path.exists() && sha256_file(&out.path)? != out.sha256 {
                return Err(Error::ArtifactChanged {
                    stage: self.stage.clone(),
                    path: out.path.clone(),
                });
            }
        }
        Ok(())
    }
}
