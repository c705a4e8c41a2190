//! Checkpoint files: JSON holding the run configuration, its hash and the
//! full simulation state. Floats are written in shortest round-trip form
//! and parsed exactly, so a reload reproduces every bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::transport::SimulationState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint version {found}, expected {CHECKPOINT_VERSION}")]
    Version { found: u32 },
    #[error("checkpoint config hash mismatch")]
    Hash,
    #[error("checkpoint state has dimension {state}, config has {config}")]
    Dimension { state: u32, config: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub state: SimulationState,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, state: &SimulationState) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: config.hash(),
            config: config.clone(),
            state: state.clone(),
        }
    }

    pub fn verify(&self) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: self.version });
        }
        if self.config.hash() != self.config_hash {
            return Err(CheckpointError::Hash);
        }
        let (state, config) = (self.state.ensemble().dim().get(), self.config.d.get());
        if state != config {
            return Err(CheckpointError::Dimension { state, config });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
        ckpt.verify()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(path, self.to_json()).map_err(io)
    }

    /// Saves to `<output_dir>/checkpoints/step_<n>.json` and returns the path.
    pub fn save_in(&self, output_dir: &Path) -> Result<PathBuf, CheckpointError> {
        let path = output_dir
            .join("checkpoints")
            .join(format!("step_{:08}.json", self.state.step_count()));
        self.save(&path)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
