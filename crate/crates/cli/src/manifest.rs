//! Output directory bookkeeping and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the canonical JSON form of a resolved configuration.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

/// Writes result files into one directory and remembers their digests.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
    phases: Vec<Phase>,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            phases: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Runs `f` and records its wall-clock time under `name`.
    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.phases.push(Phase {
            name: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes `manifest.json`; the only file carrying timings and a timestamp.
    pub fn finish<C: Serialize>(mut self, command: &'static str, seed: u64, jobs: usize, config: &C) -> Result<()> {
        let created_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        self.phases.push(Phase {
            name: "total".into(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        let manifest = Manifest {
            command,
            artifact_version: ARTIFACT_VERSION,
            config_hash: config_hash(config)?,
            seed,
            jobs,
            config,
            outputs: &self.files,
            timings: &self.phases,
            created_unix_ms,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'static str,
    artifact_version: &'static str,
    config_hash: String,
    seed: u64,
    jobs: usize,
    config: &'a C,
    outputs: &'a [OutputFile],
    timings: &'a [Phase],
    created_unix_ms: u64,
}
