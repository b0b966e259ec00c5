//! Config-file overlay. Values present in the TOML file override the
//! corresponding command-line flags.

use std::path::{Path, PathBuf};

use poet::{PoetError, Result};
use serde::Deserialize;

/// Flat option bag mirroring the command-line flags. Every command reads
/// the keys it understands.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub panel: Option<PathBuf>,
    pub orientation: Option<String>,
    pub k: Option<usize>,
    pub max_k: Option<usize>,
    pub ic: Option<String>,
    pub c: Option<f64>,
    pub cv: Option<bool>,
    pub rule: Option<String>,
    pub scad_a: Option<f64>,
    pub al_eta: Option<f64>,
    pub style: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub design: Option<String>,
    pub p: Option<usize>,
    pub t: Option<usize>,
    pub reps: Option<u64>,
    pub estimators: Option<Vec<String>>,
    pub k_sweep: Option<bool>,
    pub window: Option<usize>,
    pub rebalance: Option<usize>,
    pub cv_folds: Option<usize>,
    pub cv_grid_points: Option<usize>,
    pub cv_epsilon: Option<f64>,
    pub calibration: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| {
                    PoetError::InvalidParameter(format!("config {}: {e}", p.display()))
                })
            }
        }
    }
}

/// Applies the override rule: a config value, when present, wins.
pub fn overlay<T: Clone>(flag: T, file_value: &Option<T>) -> T {
    file_value.clone().unwrap_or(flag)
}

pub fn overlay_opt<T: Clone>(flag: Option<T>, file_value: &Option<T>) -> Option<T> {
    file_value.clone().or(flag)
}

/// Default output directory: `--out`, then `POET_OUT_DIR`, then `.`.
pub fn resolve_out_dir(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os("POET_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
