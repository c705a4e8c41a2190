//! Particle transport along the flow map with classical RK4.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biot_savart::{self_velocities, velocity_field, FieldError, ParticleEnsemble, VelocitySample};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::{measure, DiagnosticSink, DiagnosticsError};
use crate::initial::build_initial_ensemble;
use crate::kernel::{HalfPlanePoint, ProfileKernel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("particle {particle} reached r = {r} in RK stage {stage}")]
    AxisCrossing { particle: usize, stage: u8, r: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    t: f64,
    step_count: u64,
    ensemble: ParticleEnsemble,
    support: f64,
    initial_support: f64,
}

impl SimulationState {
    pub fn new(ensemble: ParticleEnsemble) -> Self {
        let s0 = ensemble.max_radius();
        Self {
            t: 0.0,
            step_count: 0,
            ensemble,
            support: s0,
            initial_support: s0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    /// Running maximum of the particle radii, `S(t)`.
    pub fn support(&self) -> f64 {
        self.support
    }

    /// `S0`, the largest initial particle radius.
    pub fn initial_support(&self) -> f64 {
        self.initial_support
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub t_new: f64,
    pub max_displacement: f64,
    pub min_r: f64,
    pub velocity_evals: usize,
}

/// Velocities at the particles. Both paths give identical bits; the pair
/// loop does half the work but runs on one thread.
fn particle_velocities<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    delta: f64,
) -> Result<Vec<VelocitySample>, FieldError> {
    if rayon::current_num_threads() >= 3 {
        velocity_field(ens, kernel, ens.positions(), delta)
    } else {
        self_velocities(ens, kernel, delta)
    }
}

fn displaced(
    base: &[HalfPlanePoint],
    k: &[VelocitySample],
    h: f64,
    stage: u8,
) -> Result<Vec<HalfPlanePoint>, TransportError> {
    base.iter()
        .zip(k)
        .enumerate()
        .map(|(i, (p, u))| {
            let q = HalfPlanePoint::new(p.r + h * u.ur, p.z + h * u.uz);
            if q.r > 0.0 {
                Ok(q)
            } else {
                Err(TransportError::AxisCrossing {
                    particle: i,
                    stage,
                    r: q.r,
                })
            }
        })
        .collect()
}

fn rk4<K: ProfileKernel + ?Sized>(
    state: &SimulationState,
    kernel: &K,
    dt: f64,
    delta: f64,
) -> Result<(SimulationState, StepReport), TransportError> {
    let ens = &state.ensemble;
    let x = ens.positions();
    let k1 = particle_velocities(ens, kernel, delta)?;
    let x2 = displaced(x, &k1, 0.5 * dt, 2)?;
    let k2 = particle_velocities(&ens.with_positions(x2), kernel, delta)?;
    let x3 = displaced(x, &k2, 0.5 * dt, 3)?;
    let k3 = particle_velocities(&ens.with_positions(x3), kernel, delta)?;
    let x4 = displaced(x, &k3, dt, 4)?;
    let k4 = particle_velocities(&ens.with_positions(x4), kernel, delta)?;

    let w = dt / 6.0;
    let mut next = Vec::with_capacity(x.len());
    let mut max_displacement = 0.0f64;
    let mut min_r = f64::INFINITY;
    for i in 0..x.len() {
        let dr = w * (k1[i].ur + 2.0 * (k2[i].ur + k3[i].ur) + k4[i].ur);
        let dz = w * (k1[i].uz + 2.0 * (k2[i].uz + k3[i].uz) + k4[i].uz);
        let q = HalfPlanePoint::new(x[i].r + dr, x[i].z + dz);
        if !(q.r > 0.0) {
            return Err(TransportError::AxisCrossing {
                particle: i,
                stage: 5,
                r: q.r,
            });
        }
        max_displacement = max_displacement.max(dr.hypot(dz));
        min_r = min_r.min(q.r);
        next.push(q);
    }
    let ensemble = ens.with_positions(next);
    let support = state.support.max(ensemble.max_radius());
    let report = StepReport {
        t_new: state.t + dt,
        max_displacement,
        min_r,
        velocity_evals: 4 * x.len(),
    };
    Ok((
        SimulationState {
            t: state.t + dt,
            step_count: state.step_count + 1,
            ensemble,
            support,
            initial_support: state.initial_support,
        },
        report,
    ))
}

/// One RK4 step of size `dt` with blob regularization `delta`.
pub fn step<K: ProfileKernel + ?Sized>(
    state: &SimulationState,
    kernel: &K,
    dt: f64,
    delta: f64,
) -> Result<(SimulationState, StepReport), TransportError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(TransportError::InvalidStep(dt));
    }
    rk4(state, kernel, dt, delta)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("diagnostic sink: {0}")]
    Sink(#[from] std::io::Error),
    #[error("step {step} (t = {t}) failed: {source}")]
    Step {
        step: u64,
        t: f64,
        source: TransportError,
        /// Checkpoint of the last good state, if checkpoints are enabled.
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SimulationState,
    pub checkpoints: Vec<PathBuf>,
    pub records: usize,
}

/// Runs the configured simulation from `t = 0` to `t_end`.
///
/// A record is taken at step 0, at every configured probe time (every step
/// if none are configured), and at the final step. When `checkpoint_every`
/// is nonzero, checkpoints go to `<output_dir>/checkpoints/`, and a failed
/// step leaves a checkpoint of the last good state there as well.
pub fn run<K: ProfileKernel + ?Sized>(
    config: &RunConfig,
    kernel: &K,
    sinks: &mut [&mut dyn DiagnosticSink],
) -> Result<RunOutcome, RunError> {
    let (ens, _) = build_initial_ensemble(config)?;
    drive(config, SimulationState::new(ens), kernel, sinks, true)
}

/// Continues a run from a checkpoint. The checkpointed step itself is not
/// recorded again.
pub fn resume<K: ProfileKernel + ?Sized>(
    checkpoint: &Checkpoint,
    kernel: &K,
    sinks: &mut [&mut dyn DiagnosticSink],
) -> Result<RunOutcome, RunError> {
    checkpoint.verify()?;
    drive(&checkpoint.config, checkpoint.state.clone(), kernel, sinks, false)
}

fn drive<K: ProfileKernel + ?Sized>(
    config: &RunConfig,
    mut state: SimulationState,
    kernel: &K,
    sinks: &mut [&mut dyn DiagnosticSink],
    record_start: bool,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let total = config.total_steps();
    let record_steps = config.record_steps();
    let wants_record = |n: u64| n == total || record_steps.as_ref().map_or(true, |s| s.binary_search(&n).is_ok());
    let probes = config.probes_for(state.initial_support);
    let mut outcome_checkpoints = Vec::new();
    let mut records = 0;

    let mut emit = |state: &SimulationState, sinks: &mut [&mut dyn DiagnosticSink]| -> Result<(), RunError> {
        let rec = measure(state, kernel, &probes, config.z_star, config.delta)?;
        for sink in sinks.iter_mut() {
            sink.record(state, &rec)?;
        }
        records += 1;
        Ok(())
    };

    if record_start && wants_record(state.step_count) {
        emit(&state, sinks)?;
    }
    while state.step_count < total {
        match step(&state, kernel, config.dt, config.delta) {
            Ok((mut next, _)) => {
                // Times are multiples of dt rather than a running sum.
                next.t = next.step_count as f64 * config.dt;
                state = next;
            }
            Err(source) => {
                let checkpoint = if config.checkpoint_every > 0 {
                    Some(Checkpoint::new(config, &state).save_in(&config.output_dir)?)
                } else {
                    None
                };
                let message = source.to_string();
                for sink in sinks.iter_mut() {
                    sink.failure(state.t, &message)?;
                    sink.finish()?;
                }
                return Err(RunError::Step {
                    step: state.step_count,
                    t: state.t,
                    source,
                    checkpoint,
                });
            }
        }
        if wants_record(state.step_count) {
            emit(&state, sinks)?;
        }
        if config.checkpoint_every > 0 && state.step_count % config.checkpoint_every == 0 {
            outcome_checkpoints.push(Checkpoint::new(config, &state).save_in(&config.output_dir)?);
        }
    }
    for sink in sinks.iter_mut() {
        sink.finish()?;
    }
    Ok(RunOutcome {
        state,
        checkpoints: outcome_checkpoints,
        records,
    })
}
