//! Experiment runner behind the `ltlab` binary: config loading, run
//! directories keyed by content hash, and table export.

pub mod commands;
pub mod config;
pub mod export;
pub mod registry;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ltlab::Error),

    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("run {id} already exists at {path}")]
    RunExists { id: String, path: PathBuf },

    #[error("missing runs: {}", .0.join(", "))]
    MissingRuns(Vec<String>),

    #[error("run {0} did not complete")]
    Incomplete(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
