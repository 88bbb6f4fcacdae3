//! Output manifests recording what a command consumed and produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::error::{Error, Result};

/// Content hash in the form git uses for blobs: SHA-1 of "blob <len>\0" + bytes.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    Ok(git_blob_sha1(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output paths relative to the output directory.
    pub outputs: Vec<String>,
    pub tool_version: String,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seeds: Vec<u64>) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash,
            seeds,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Records the hash of an input file; missing files are skipped.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if path.is_file() {
            self.inputs.insert(path.display().to_string(), hash_file(path)?);
        }
        Ok(())
    }

    pub fn add_output(&mut self, out_dir: &Path, path: &Path) {
        let rel: PathBuf = path.strip_prefix(out_dir).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf());
        self.outputs.push(rel.display().to_string());
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(Error::io(&path))?;
        Ok(path)
    }
}
