//! Staged output directory and run manifest.
//!
//! Files are written into a temporary directory next to the destination and
//! only moved into place once the whole command has succeeded, so a failed
//! run leaves no partial output behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesHash {
    pub source: String,
    pub raw_sha256: String,
    pub prepared_sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config_path: String,
    pub config_sha256: String,
    pub series: BTreeMap<String, SeriesHash>,
    pub seed: u64,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp_unix: u64,
    pub outputs: Vec<OutputFile>,
}

/// `SOURCE_DATE_EPOCH` when set and valid, the system clock otherwise.
pub fn timestamp() -> u64 {
    if let Some(v) = std::env::var_os("SOURCE_DATE_EPOCH") {
        if let Some(t) = v.to_str().and_then(|s| s.trim().parse().ok()) {
            return t;
        }
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Install {
    /// Move files into the destination, replacing same-named files.
    Merge,
    /// Replace the destination directory as a whole. An existing
    /// destination must be empty or hold a previous manifest.
    Replace,
}

pub struct Staging {
    dest: PathBuf,
    dir: tempfile::TempDir,
    files: Vec<OutputFile>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Run(format!("{}: {e}", path.display()))
}

impl Staging {
    pub fn new(dest: &Path) -> Result<Self, CliError> {
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).map_err(|e| io_err(&parent, e))?;
        let name = dest
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let dir = tempfile::Builder::new()
            .prefix(&format!(".{name}.staging-"))
            .tempdir_in(&parent)
            .map_err(|e| io_err(&parent, e))?;
        Ok(Self {
            dest: dest.to_path_buf(),
            dir,
            files: Vec::new(),
        })
    }

    /// Writes `rel` (forward slashes) and records its hash.
    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let bytes = bytes.as_ref();
        let path = self.dir.path().join(rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).map_err(|e| io_err(p, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(OutputFile {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    /// Writes the manifest and moves everything into the destination.
    pub fn commit(mut self, mut manifest: RunManifest, mode: Install) -> Result<PathBuf, CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.outputs = self.files.clone();
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        let mpath = self.dir.path().join(MANIFEST);
        std::fs::write(&mpath, text).map_err(|e| io_err(&mpath, e))?;
        let dest = self.dest.clone();
        match mode {
            Install::Replace => {
                if dest.exists() {
                    let empty = std::fs::read_dir(&dest)
                        .map_err(|e| io_err(&dest, e))?
                        .next()
                        .is_none();
                    if !empty && !dest.join(MANIFEST).is_file() {
                        return Err(CliError::Run(format!(
                            "{} exists and was not written by this tool; refusing to replace it",
                            dest.display()
                        )));
                    }
                    std::fs::remove_dir_all(&dest).map_err(|e| io_err(&dest, e))?;
                }
                let staged = self.dir.keep();
                std::fs::rename(&staged, &dest).map_err(|e| io_err(&dest, e))?;
            }
            Install::Merge => {
                std::fs::create_dir_all(&dest).map_err(|e| io_err(&dest, e))?;
                let mut rels: Vec<String> = self.files.iter().map(|f| f.path.clone()).collect();
                rels.push(MANIFEST.into());
                for rel in rels {
                    let from = self.dir.path().join(&rel);
                    let to = dest.join(&rel);
                    if let Some(p) = to.parent() {
                        std::fs::create_dir_all(p).map_err(|e| io_err(p, e))?;
                    }
                    std::fs::rename(&from, &to).map_err(|e| io_err(&to, e))?;
                }
            }
        }
        Ok(dest)
    }
}
