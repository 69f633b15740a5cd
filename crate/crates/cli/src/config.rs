//! TOML run configuration. Command-line flags take precedence over every
//! key read from the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use grouppanel::simulate::ScenarioGrid;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub unit: Option<String>,
    pub period: Option<String>,
    pub outcome: Option<String>,
    pub regressors: Option<Vec<String>>,
    pub within: Option<bool>,
    pub gfe: Option<bool>,
    pub k: Option<usize>,
    pub kmin: Option<usize>,
    pub kmax: Option<usize>,
    pub penalty: Option<String>,
    pub starts: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub jobs: Option<usize>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Vec<ScenarioGrid>,
}

impl FileConfig {
    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// First present value: flag, then config file.
pub fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
