use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
    pub written_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub command: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

/// Provenance record of everything written under a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub config: RunConfig,
    /// Keyed by path relative to the run directory when inside it.
    pub files: BTreeMap<String, FileEntry>,
    pub commands: Vec<CommandEntry>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Creates parent directories and writes `bytes`.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

impl RunManifest {
    pub fn path(out: &Path) -> PathBuf {
        out.join(MANIFEST_FILE)
    }

    /// Reads the run directory's manifest or starts a new one; the config
    /// snapshot is replaced by `config`.
    pub fn open(config: &RunConfig) -> Result<Self, CliError> {
        let path = Self::path(&config.out);
        let mut m = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            serde_json::from_str::<RunManifest>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            let now = now_unix();
            RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                created_unix: now,
                updated_unix: now,
                config: config.clone(),
                files: BTreeMap::new(),
                commands: Vec::new(),
            }
        };
        m.config = config.clone();
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        Ok(m)
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.config.out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Writes `bytes` to `path` and records its hash.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_file(path, bytes)?;
        self.record(path, bytes);
        Ok(())
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        let entry = FileEntry {
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            written_unix: now_unix(),
        };
        self.files.insert(self.key(path), entry);
    }

    pub fn finish(&mut self, command: &str, started_unix: u64) -> Result<(), CliError> {
        let now = now_unix();
        self.commands.push(CommandEntry {
            command: command.to_string(),
            started_unix,
            finished_unix: now,
        });
        self.updated_unix = now;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&Self::path(&self.config.out), text.as_bytes())
    }

    /// Files whose current content no longer matches the recorded hash.
    pub fn verify(&self) -> Vec<String> {
        self.files
            .iter()
            .filter(|(key, entry)| {
                let p = Path::new(key.as_str());
                let full = if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    self.config.out.join(p)
                };
                std::fs::read(&full)
                    .map(|b| sha256_hex(&b) != entry.sha256)
                    .unwrap_or(true)
            })
            .map(|(key, _)| key.clone())
            .collect()
    }
}
