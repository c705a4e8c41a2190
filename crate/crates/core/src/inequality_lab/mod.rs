//! Numerical checks of the estimates behind the confinement argument.
//!
//! Every check returns an [`InequalityReport`]. Checks with an explicit
//! constant compare left over right side (`worst_ratio <= 1` passes);
//! checks of a `≲` claim report fitted constants and pass when those are
//! finite.

mod cutoff;
mod elementary;
mod symmetrization;
mod tail;
mod velocity;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cutoff::{verify_cutoff_bounds, CutoffFn};
pub use elementary::{
    claim_constant, lemma34a_choice, solve_a_for_b, verify_lemma34a, verify_lemma34b, ClaimConstant,
};
pub use symmetrization::{symmetrization_check, SymmetrizationParts};
pub use tail::{
    cumulative_trapezoid, pair_stability, verify_iterated_bound, verify_tail_recursion, ProbeSeries, TailSeries,
};
pub use velocity::{
    patch_sample_grid, verify_kernel_bound, verify_kernel_derivative, verify_kernel_slopes,
    verify_patch_velocity_bound, PatchGrid,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("insufficient time resolution: {0}")]
    Resolution(String),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
    #[error(transparent)]
    Field(#[from] crate::biot_savart::FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    /// Description of the parameter grid.
    pub grid: String,
    /// Max over the grid of left side over right side (0 if never defined).
    pub worst_ratio: f64,
    /// Named fitted constants.
    pub fitted: Vec<(String, f64)>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, grid: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            grid: grid.into(),
            worst_ratio: 0.0,
            fitted: Vec::new(),
            pass: true,
            notes: Vec::new(),
        }
    }

    pub fn fitted(&self, key: &str) -> Option<f64> {
        self.fitted.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }

    pub(crate) fn with_fit(mut self, key: &str, value: f64) -> Self {
        self.fitted.push((key.to_string(), value));
        self
    }

    /// One line for a terminal table.
    pub fn summary_line(&self) -> String {
        let fits: Vec<String> = self.fitted.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        format!(
            "{:<4} {:<34} worst={:.6e} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.worst_ratio,
            fits.join(" ")
        )
    }
}

/// Writes reports as a JSON array.
pub fn write_reports(path: &Path, reports: &[InequalityReport]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(reports).map_err(std::io::Error::other)?;
    fs::write(path, text)
}

pub fn read_reports(path: &Path) -> std::io::Result<Vec<InequalityReport>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
