//! Output directories and their `run.json` manifests.
//!
//! Every file a command produces goes through one [`RunWriter`], which
//! records a SHA-256 per file. Paths in the manifest are relative and use `/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use ajfuse_core::io::{encode_pgm, PgmFormat};
use ajfuse_core::Image;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_NAME: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    /// Files read, relative to the input directory they came from.
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `a/b/c` form of a relative path.
pub fn slash_path(rel: &Path) -> String {
    rel.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join("/")
}

pub struct RunWriter {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

impl RunWriter {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(RunWriter {
            root: root.to_path_buf(),
            outputs: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let rel = rel.as_ref();
        let key = slash_path(rel);
        let plain = rel.components().all(|c| matches!(c, Component::Normal(_)));
        if !plain || key.is_empty() || key == MANIFEST_NAME {
            bail!("refusing to write {}", rel.display());
        }
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(key, sha256_hex(bytes));
        Ok(())
    }

    pub fn write_pgm(&mut self, rel: impl AsRef<Path>, img: &Image) -> Result<()> {
        self.write(rel, &encode_pgm(img, PgmFormat::Binary))
    }

    pub fn write_csv<T: Serialize>(&mut self, rel: impl AsRef<Path>, rows: &[T]) -> Result<()> {
        let bytes = ajfuse_core::corpus::csv_bytes(rows)?;
        self.write(rel, &bytes)
    }

    /// Records an input file under a name relative to its source directory.
    pub fn record_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn finish(self, command: &str, config: &RunConfig) -> Result<RunManifest> {
        let records = |m: BTreeMap<String, String>| {
            m.into_iter()
                .map(|(path, sha256)| FileRecord { path, sha256 })
                .collect()
        };
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config.hash(command),
            config: config.clone(),
            inputs: records(self.inputs),
            outputs: records(self.outputs),
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        let path = self.root.join(MANIFEST_NAME);
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn read_manifest(root: &Path) -> Result<RunManifest> {
    let path = root.join(MANIFEST_NAME);
    let text = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Confirms that `root` was produced by `command` with this configuration and
/// that every recorded output is still present and unchanged.
pub fn check_run(root: &Path, command: &str, config: &RunConfig) -> Result<RunManifest> {
    let manifest = read_manifest(root)?;
    if manifest.command != command {
        bail!("{} was written by `{}`, not `{command}`", root.display(), manifest.command);
    }
    let hash = config.hash(command);
    if manifest.config_hash != hash {
        bail!("config hash {hash} does not match recorded {}", manifest.config_hash);
    }
    for record in &manifest.outputs {
        let path = root.join(&record.path);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        if sha256_hex(&bytes) != record.sha256 {
            bail!("{} changed since the run", record.path);
        }
    }
    Ok(manifest)
}
