//! Run configuration.
//!
//! The on-disk format is TOML: flat top-level keys plus one
//! `[initial_data]` table tagged by `kind`. Every key except `d` has a
//! default; unknown keys are rejected.
//!
//! ```toml
//! d = 4
//! n_target = 3000
//! dt = 0.01
//! t_end = 10.0
//! delta = 0.02
//! probe_radii = []        # empty: S0 * 2^k for k = 0..=5
//! probe_times = []        # empty: record after every step
//! seed = 0
//! jitter = 0.0            # fraction of a grid cell, drawn from `seed`
//! output_dir = "out"
//! checkpoint_every = 0    # steps; 0 disables periodic checkpoints
//!
//! [initial_data]
//! kind = "annulus"        # or "gaussian_ring", "mirror_pair"
//! r_min = 1.0
//! r_max = 2.0
//! z_min = 0.0
//! z_max = 1.0
//! xi0 = 1.0
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kernel::Dimension;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Initial relative vorticity `ξ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `ξ₀` constant on the rectangle `[r_min, r_max] x [z_min, z_max]`.
    Annulus {
        #[serde(default = "defaults::r_min")]
        r_min: f64,
        #[serde(default = "defaults::r_max")]
        r_max: f64,
        #[serde(default = "defaults::z_min")]
        z_min: f64,
        #[serde(default = "defaults::z_max")]
        z_max: f64,
        #[serde(default = "defaults::xi0")]
        xi0: f64,
    },
    /// `amplitude * exp(-ρ²/(2 width²))` around `(r_center, z_center)`,
    /// truncated to `ρ <= 4 width`.
    GaussianRing {
        r_center: f64,
        z_center: f64,
        width: f64,
        amplitude: f64,
    },
    /// The annulus on `[z_min, z_max]` together with its reflection in
    /// `z = 0`, both carrying `ξ₀`.
    MirrorPair {
        #[serde(default = "defaults::r_min")]
        r_min: f64,
        #[serde(default = "defaults::r_max")]
        r_max: f64,
        #[serde(default = "defaults::mirror_z_min")]
        z_min: f64,
        #[serde(default = "defaults::z_max")]
        z_max: f64,
        #[serde(default = "defaults::xi0")]
        xi0: f64,
    },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Annulus {
            r_min: defaults::r_min(),
            r_max: defaults::r_max(),
            z_min: defaults::z_min(),
            z_max: defaults::z_max(),
            xi0: defaults::xi0(),
        }
    }
}

impl InitialData {
    /// Truncation radius of the Gaussian ring, in units of its width.
    pub const GAUSSIAN_CUTOFF: f64 = 4.0;

    fn validate(&self) -> Result<(), ConfigError> {
        let rect = |r_min: f64, r_max: f64, z_min: f64, z_max: f64, xi0: f64| {
            if !(r_min > 0.0) {
                return Err(invalid("initial_data.r_min", format!("support must avoid the axis, got {r_min}")));
            }
            if !(r_max > r_min) || !r_max.is_finite() {
                return Err(invalid("initial_data.r_max", format!("must exceed r_min, got {r_max}")));
            }
            if !(z_max > z_min) || !z_min.is_finite() || !z_max.is_finite() {
                return Err(invalid("initial_data.z_max", format!("must exceed z_min, got {z_max}")));
            }
            if !xi0.is_finite() {
                return Err(invalid("initial_data.xi0", "must be finite"));
            }
            Ok(())
        };
        match *self {
            InitialData::Annulus {
                r_min,
                r_max,
                z_min,
                z_max,
                xi0,
            } => rect(r_min, r_max, z_min, z_max, xi0),
            InitialData::MirrorPair {
                r_min,
                r_max,
                z_min,
                z_max,
                xi0,
            } => {
                if !(z_min >= 0.0) {
                    return Err(invalid("initial_data.z_min", format!("upper copy must lie in z >= 0, got {z_min}")));
                }
                rect(r_min, r_max, z_min, z_max, xi0)
            }
            InitialData::GaussianRing {
                r_center,
                z_center,
                width,
                amplitude,
            } => {
                if !(width > 0.0) || !width.is_finite() {
                    return Err(invalid("initial_data.width", format!("must be positive, got {width}")));
                }
                if !(r_center - Self::GAUSSIAN_CUTOFF * width > 0.0) || !r_center.is_finite() {
                    return Err(invalid(
                        "initial_data.r_center",
                        format!("truncated support must avoid the axis: r_center = {r_center}, width = {width}"),
                    ));
                }
                if !z_center.is_finite() || !amplitude.is_finite() {
                    return Err(invalid("initial_data", "center and amplitude must be finite"));
                }
                Ok(())
            }
        }
    }
}

mod defaults {
    pub fn r_min() -> f64 {
        1.0
    }
    pub fn r_max() -> f64 {
        2.0
    }
    pub fn z_min() -> f64 {
        0.0
    }
    pub fn mirror_z_min() -> f64 {
        0.25
    }
    pub fn z_max() -> f64 {
        1.0
    }
    pub fn xi0() -> f64 {
        1.0
    }
    pub fn n_target() -> usize {
        1024
    }
    pub fn dt() -> f64 {
        0.01
    }
    pub fn t_end() -> f64 {
        10.0
    }
    pub fn delta() -> f64 {
        0.02
    }
    pub fn output_dir() -> std::path::PathBuf {
        "out".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: Dimension,
    #[serde(default = "defaults::n_target")]
    pub n_target: usize,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::t_end")]
    pub t_end: f64,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default)]
    pub probe_radii: Vec<f64>,
    #[serde(default)]
    pub probe_times: Vec<f64>,
    /// Height of the `u^r` profile samples; the vorticity centroid if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_star: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub initial_data: InitialData,
}

impl RunConfig {
    /// Defaults for everything but the dimension.
    pub fn new(d: Dimension) -> Self {
        Self {
            d,
            n_target: defaults::n_target(),
            dt: defaults::dt(),
            t_end: defaults::t_end(),
            delta: defaults::delta(),
            probe_radii: Vec::new(),
            probe_times: Vec::new(),
            z_star: None,
            seed: 0,
            jitter: 0.0,
            output_dir: defaults::output_dir(),
            checkpoint_every: 0,
            initial_data: InitialData::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form with every default filled in.
    ///
    /// Panics if `seed` or `checkpoint_every` exceeds `i64::MAX`, the TOML
    /// integer range; `validate` rejects such configs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(invalid("t_end", format!("must be >= 0, got {}", self.t_end)));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(invalid("delta", format!("must be >= 0, got {}", self.delta)));
        }
        if self.n_target < 4 {
            return Err(invalid("n_target", format!("need at least 4 particles, got {}", self.n_target)));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(invalid("jitter", format!("must lie in [0, 0.5), got {}", self.jitter)));
        }
        if self.probe_radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite())
            || self.probe_radii.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("probe_radii", "must be finite, >= 0 and strictly increasing"));
        }
        if self.probe_times.iter().any(|t| !(*t >= 0.0) || !t.is_finite())
            || self.probe_times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("probe_times", "must be finite, >= 0 and strictly increasing"));
        }
        for (field, v) in [("seed", self.seed), ("checkpoint_every", self.checkpoint_every)] {
            if v > i64::MAX as u64 {
                return Err(invalid(field, format!("must fit a TOML integer (<= {}), got {v}", i64::MAX)));
            }
        }
        if self.z_star.is_some_and(|z| !z.is_finite()) {
            return Err(invalid("z_star", "must be finite"));
        }
        self.initial_data.validate()
    }

    /// Number of fixed steps covering `[0, t_end]`.
    pub fn total_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    /// Step indices after which a diagnostic record is taken. `None` means
    /// every step.
    pub fn record_steps(&self) -> Option<Vec<u64>> {
        if self.probe_times.is_empty() {
            return None;
        }
        let last = self.total_steps();
        let mut steps: Vec<u64> = self
            .probe_times
            .iter()
            .map(|t| ((t / self.dt).round() as u64).min(last))
            .collect();
        steps.push(0);
        steps.sort_unstable();
        steps.dedup();
        Some(steps)
    }

    /// Probe radii, falling back to `S0 * 2^k`, `k = 0..=5`.
    pub fn probes_for(&self, s0: f64) -> Vec<f64> {
        if !self.probe_radii.is_empty() || !(s0 > 0.0) {
            return self.probe_radii.clone();
        }
        (0..=5).map(|k| s0 * f64::from(1u32 << k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse("d = 3\n").unwrap();
        assert_eq!(cfg, RunConfig::new(Dimension::new(3).unwrap()));
        assert_eq!(cfg.total_steps(), 1000);
    }

    #[test]
    fn axis_touching_patch_rejected() {
        let err = RunConfig::parse("d = 3\n[initial_data]\nkind = \"annulus\"\nr_min = 0.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "initial_data.r_min", .. }), "{err}");
    }

    #[test]
    fn two_dimensions_rejected() {
        let err = RunConfig::parse("d = 2\n").unwrap_err();
        assert!(err.to_string().contains("d >= 3"), "{err}");
    }

    #[test]
    fn unknown_and_missing_keys_rejected() {
        assert!(RunConfig::parse("d = 3\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("dt = 0.1\n").is_err());
        assert!(RunConfig::parse("d = 3\nn_target = 3\n").is_err());
        let mut cfg = RunConfig::new(Dimension::new(3).unwrap());
        cfg.seed = u64::MAX;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn record_steps_include_start() {
        let mut cfg = RunConfig::new(Dimension::new(3).unwrap());
        cfg.t_end = 1.0;
        cfg.dt = 0.1;
        assert_eq!(cfg.record_steps(), None);
        cfg.probe_times = vec![0.3, 0.5, 2.0];
        assert_eq!(cfg.record_steps(), Some(vec![0, 3, 5, 10]));
    }

    #[test]
    fn gaussian_ring_round_trips() {
        let text = "d = 5\n[initial_data]\nkind = \"gaussian_ring\"\nr_center = 2.0\nz_center = 0.0\nwidth = 0.25\namplitude = 3.0\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
