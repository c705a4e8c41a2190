//! Vortex-particle simulation of axisymmetric swirl-free Euler flows in
//! `R^d`, `d >= 3`, with diagnostics and numerical checks of the estimates
//! that confine the vorticity support.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biot_savart;
pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod inequality_lab;
pub mod initial;
pub mod kernel;
pub(crate) mod quadrature;
pub mod transport;

pub use biot_savart::{FieldError, ParticleEnsemble, Sign, VelocitySample};
pub use bundle::ResultsBundle;
pub use checkpoint::Checkpoint;
pub use config::{ConfigError, InitialData, RunConfig};
pub use diagnostics::{DiagnosticRecord, DiagnosticSink};
pub use inequality_lab::InequalityReport;
pub use kernel::{Dimension, HalfPlanePoint, KernelError, KernelEvaluator, KernelTable, ProfileKernel};
pub use transport::{RunError, SimulationState};
