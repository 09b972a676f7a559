use std::path::Path;

use ltlab::experiment::BenchmarkConfig;

use crate::{CliError, Result};

/// Reads a TOML benchmark config. Unknown keys are rejected. Without a
/// path the desk-scale defaults are used.
pub fn load_config(path: Option<&Path>) -> Result<BenchmarkConfig> {
    let Some(path) = path else {
        return Ok(BenchmarkConfig::desk_scale());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let config = parse_config(&text).map_err(|msg| CliError::Config {
        path: path.to_path_buf(),
        msg,
    })?;
    Ok(config)
}

pub fn parse_config(text: &str) -> Result<BenchmarkConfig, String> {
    let config: BenchmarkConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

pub fn to_toml(config: &BenchmarkConfig) -> String {
    toml::to_string(config).expect("config serializes")
}
