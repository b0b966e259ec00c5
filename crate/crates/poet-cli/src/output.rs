//! Run metadata and shared output helpers.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use poet::Result;
use serde::Serialize;

/// Metadata embedded in every run's `meta.json`: full configuration, crate
/// version, seed, and wall time. Rerunning with the same configuration
/// reproduces the file except for the timing fields.
#[derive(Debug, Serialize)]
pub struct RunMeta<C: Serialize, R: Serialize> {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: C,
    pub results: R,
    pub wall_time_secs: f64,
    pub timestamp_unix: u64,
}

pub fn write_meta<C: Serialize, R: Serialize>(
    dir: &Path,
    command: &str,
    seed: u64,
    config: C,
    results: R,
    wall_time_secs: f64,
) -> Result<PathBuf> {
    let meta = RunMeta {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        results,
        wall_time_secs,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| poet::PoetError::InvalidParameter(format!("meta serialization: {e}")))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Labels `0..n` with a prefix, for matrix CSV headers.
pub fn indexed_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
