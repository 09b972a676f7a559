//! Run directories. Each run lives in `<root>/<run id>/` and is never
//! reopened once created.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ltlab::experiment::{BenchmarkConfig, ResultRow};
use ltlab::metrics::to_json_line;
use ltlab::EpochMetrics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

pub const RECORD_FILE: &str = "record.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.json";

/// First 16 hex digits of SHA-256 over the command, config and seed.
pub fn run_id(command: &str, config: &BenchmarkConfig, seed: u64) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        command: &'a str,
        config: &'a BenchmarkConfig,
        seed: u64,
    }
    let bytes = serde_json::to_vec(&Key { command, config, seed }).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Which exported table a run's rows belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Methods,
    Decoupling,
    Samplers,
    Adaptors,
    FeatureQuality,
    Ensembles,
    Norms,
    Compactness,
}

impl TableKind {
    pub const ALL: [TableKind; 8] = [
        TableKind::Methods,
        TableKind::Decoupling,
        TableKind::Samplers,
        TableKind::Adaptors,
        TableKind::FeatureQuality,
        TableKind::Ensembles,
        TableKind::Norms,
        TableKind::Compactness,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TableKind::Methods => "methods.csv",
            TableKind::Decoupling => "decoupling.csv",
            TableKind::Samplers => "samplers.csv",
            TableKind::Adaptors => "adaptors.csv",
            TableKind::FeatureQuality => "feature_quality.csv",
            TableKind::Ensembles => "ensembles.csv",
            TableKind::Norms => "norms.csv",
            TableKind::Compactness => "compactness.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub config: BenchmarkConfig,
    pub status: Status,
    pub table: Option<TableKind>,
    /// Error rates, except in norm tables where the value is a norm
    /// spread or a rank correlation.
    pub rows: Vec<ResultRow>,
    /// Files written into the run directory, relative to it.
    pub artifacts: Vec<String>,
}

impl RunRecord {
    pub fn load(root: &Path, id: &str) -> Result<Self> {
        let text = std::fs::read_to_string(root.join(id).join(RECORD_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A freshly created run directory.
#[derive(Debug)]
pub struct RunDir {
    pub id: String,
    pub path: PathBuf,
}

impl RunDir {
    /// Fails if the directory already exists.
    pub fn create(root: &Path, command: &str, config: &BenchmarkConfig, seed: u64) -> Result<Self> {
        let id = run_id(command, config, seed);
        let path = root.join(&id);
        std::fs::create_dir_all(root)?;
        match std::fs::create_dir(&path) {
            Ok(()) => Ok(Self { id, path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::RunExists { id, path }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        std::fs::write(self.file(name), contents)?;
        Ok(())
    }
}

/// Appends one metrics line per epoch as it completes and keeps the
/// wall-clock time of each epoch for `timing.json`.
pub struct MetricsLog {
    file: File,
    last: Instant,
    epoch_ms: Vec<u128>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: u128,
    pub epoch_ms: Vec<u128>,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            file: File::options().create_new(true).append(true).open(path)?,
            last: Instant::now(),
            epoch_ms: Vec::new(),
        })
    }

    pub fn log(&mut self, row: &EpochMetrics) -> ltlab::Result<()> {
        self.file.write_all(to_json_line(row)?.as_bytes())?;
        self.file.flush()?;
        let now = Instant::now();
        self.epoch_ms.push(now.duration_since(self.last).as_millis());
        self.last = now;
        Ok(())
    }

    pub fn into_epoch_ms(self) -> Vec<u128> {
        self.epoch_ms
    }
}
