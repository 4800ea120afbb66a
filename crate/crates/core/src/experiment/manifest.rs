use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AcmError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    /// Digest of `path`, recorded under `label`.
    pub fn of(path: &Path, label: impl Into<String>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| AcmError::io(path, e))?;
        Ok(Self {
            path: label.into(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Provenance record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            config_hash,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path, path.display().to_string())?);
        Ok(())
    }

    /// Records an output by its path relative to `root` when possible.
    pub fn output(&mut self, root: &Path, path: &Path) -> Result<()> {
        let label = path.strip_prefix(root).unwrap_or(path).display().to_string();
        self.outputs.push(FileDigest::of(path, label)?);
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| AcmError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AcmError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AcmError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Exclusive ownership of a run directory for the life of the value.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub const FILE: &'static str = "run.lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| AcmError::io(dir, e))?;
        let path = dir.join(Self::FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                AcmError::Config(format!("run directory {} is locked by another process", dir.display()))
            } else {
                AcmError::io(&path, e)
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
