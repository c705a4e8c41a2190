//! Index of the artifacts a run leaves in its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::inequality_lab::read_reports;

pub const BUNDLE_FILE: &str = "bundle.json";
pub const CSV_FILE: &str = "diagnostics.csv";
pub const REPORTS_FILE: &str = "reports.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub wall_time_s: f64,
}

/// Paths are relative to the bundle's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub config: RunConfig,
    pub csv: PathBuf,
    pub reports: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub provenance: Provenance,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ResultsBundle {
    pub fn new(config: &RunConfig, wall_time_s: f64) -> Self {
        Self {
            config: config.clone(),
            csv: PathBuf::from(CSV_FILE),
            reports: PathBuf::from(REPORTS_FILE),
            checkpoints: Vec::new(),
            plots: Vec::new(),
            provenance: Provenance {
                version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: config.hash(),
                wall_time_s,
            },
        }
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, BundleError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, self.config.to_toml()).map_err(io_err(&cfg_path))?;
        let path = dir.join(BUNDLE_FILE);
        let text = serde_json::to_string_pretty(self).expect("bundle is always serializable");
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let path = dir.join(BUNDLE_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| BundleError::Invalid {
            path,
            reason: e.to_string(),
        })
    }

    /// Checks that every referenced file exists and parses back.
    pub fn verify_files(&self, dir: &Path) -> Result<(), BundleError> {
        let invalid = |path: PathBuf, reason: String| BundleError::Invalid { path, reason };
        let csv_path = dir.join(&self.csv);
        let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| invalid(csv_path.clone(), e.to_string()))?;
        for row in reader.records() {
            let row = row.map_err(|e| invalid(csv_path.clone(), e.to_string()))?;
            if row.iter().any(|f| f.parse::<f64>().is_err()) {
                return Err(invalid(csv_path, "non-numeric field".into()));
            }
        }
        let reports = dir.join(&self.reports);
        read_reports(&reports).map_err(io_err(&reports))?;
        for ckpt in &self.checkpoints {
            let path = dir.join(ckpt);
            Checkpoint::load(&path).map_err(|e| invalid(path, e.to_string()))?;
        }
        for plot in &self.plots {
            let path = dir.join(plot);
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            if !text.starts_with("<svg") {
                return Err(invalid(path, "not an SVG document".into()));
            }
        }
        let cfg_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
        let cfg = RunConfig::parse(&text).map_err(|e| invalid(cfg_path.clone(), e.to_string()))?;
        if cfg != self.config {
            return Err(invalid(cfg_path, "config differs from bundle copy".into()));
        }
        Ok(())
    }
}
