use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::seeds::sha256_hex;

pub const CODE_VERSION: &str = concat!("latentlab ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the directory holding the manifest.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub files: Vec<FileEntry>,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    /// SHA-256 of the stored `config.toml`.
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

pub fn hash_file(path: &Path) -> Result<FileEntry> {
    let bytes = fs::read(path).io_ctx("hashing file", path)?;
    Ok(FileEntry { path: path.display().to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

impl RunManifest {
    /// Single-stage manifest over `files` (paths relative to `dir`).
    pub fn for_stage(
        stage: &str,
        dir: &Path,
        files: &[String],
        config_hash: String,
        seed: u64,
        wall_clock_s: f64,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(files.len());
        for f in files {
            let mut e = hash_file(&dir.join(f))?;
            e.path = f.clone();
            entries.push(e);
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(RunManifest {
            code_version: CODE_VERSION.to_string(),
            config_hash,
            seed,
            stages: vec![StageRecord { stage: stage.to_string(), files: entries, wall_clock_s }],
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").io_ctx("writing manifest", &path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).io_ctx("reading manifest", &path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileEntry> {
        self.stages.iter().flat_map(|s| &s.files)
    }

    pub fn file(&self, path: &str) -> Option<&FileEntry> {
        self.files().find(|f| f.path == path)
    }

    /// Digest of every listed file hash, leaving out timings.
    pub fn content_digest(&self) -> String {
        let mut s = format!("{}\n", self.config_hash);
        for f in self.files() {
            s.push_str(&format!("{} {}\n", f.path, f.sha256));
        }
        sha256_hex(s.as_bytes())
    }

    /// Re-hashes every listed file under `dir` and checks the stored config.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in self.files() {
            let now = hash_file(&dir.join(&f.path))?;
            if now.sha256 != f.sha256 {
                return Err(Error::Precondition(format!("{} changed since the manifest was written", f.path)));
            }
        }
        let cfg = dir.join(super::CONFIG_FILE);
        if cfg.exists() {
            let text = fs::read(&cfg).io_ctx("reading stored config", &cfg)?;
            if sha256_hex(&text) != self.config_hash {
                return Err(Error::Precondition(format!(
                    "{} does not match the manifest's config hash",
                    cfg.display()
                )));
            }
        }
        Ok(())
    }
}
