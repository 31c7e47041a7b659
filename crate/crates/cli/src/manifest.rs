use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use neurocap_core::data::{fingerprint, Split};
use neurocap_core::{DatasetRecord, Error, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::args::Command;

/// Everything needed to re-run a command. Written before any work starts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// Fully resolved training configuration, when the command trains.
    pub config: Option<TrainConfig>,
    pub seed: Option<u64>,
    pub datasets: Vec<DatasetEntry>,
    pub splits: Option<SplitFingerprints>,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    /// File path or `preset:<name>`.
    pub source: String,
    pub records: usize,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFingerprints {
    pub train: String,
    pub val: String,
    pub test: String,
    pub sizes: [usize; 3],
}

impl SplitFingerprints {
    pub fn of(split: &Split<DatasetRecord>) -> Result<Self> {
        Ok(Self {
            train: fingerprint(&split.train)?,
            val: fingerprint(&split.val)?,
            test: fingerprint(&split.test)?,
            sizes: [split.train.len(), split.val.len(), split.test.len()],
        })
    }
}

impl RunManifest {
    pub fn new(command: Command) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config: None,
            seed: None,
            datasets: Vec::new(),
            splits: None,
            artifacts: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| io_error(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())).into())
    }

    /// Fails when re-loaded data no longer matches what was recorded.
    pub fn check_datasets(&self, now: &[DatasetEntry]) -> Result<()> {
        if self.datasets.is_empty() {
            return Ok(());
        }
        for (then, now) in self.datasets.iter().zip(now) {
            if then.fingerprint != now.fingerprint {
                bail!(Error::Config(format!(
                    "dataset {} changed since the manifest was written (fingerprint {} != {})",
                    then.source, now.fingerprint, then.fingerprint
                )));
            }
        }
        Ok(())
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
