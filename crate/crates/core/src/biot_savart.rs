//! Velocity reconstruction from a vortex-particle ensemble.
//!
//! With the stream function `ψ = c_d Σ_j (r r̄_j)^{a} F_d(η_j) μ_j`, where
//! `a = d/2 - 1` and the regularized similarity variable is
//! `η_j = ((r - r̄_j)^2 + (z - z̄_j)^2 + δ^2) / (r r̄_j)`, the two velocity
//! components follow from `u^r = -r^{2-d} ∂_z ψ` and `u^z = r^{2-d} ∂_r ψ`:
//!
//! ```text
//! u^r = -2 c_d r^{-d/2} Σ_j μ_j r̄_j^{d/2-2} (z - z̄_j) F_d'(η_j)
//! u^z =    c_d r^{-d/2} Σ_j μ_j r̄_j^{d/2-1} [ a F_d(η_j) + F_d'(η_j) (2 (r - r̄_j)/r̄_j - η_j) ]
//! ```
//!
//! using `∂_z η = 2 (z - z̄)/(r r̄)` and `∂_r η = 2 (r - r̄)/(r r̄) - η/r`.
//! Each target sums over particles in index order, so a target's velocity
//! does not depend on how targets are split across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Dimension, HalfPlanePoint, KernelError, KernelValues, ProfileKernel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("target off the open half plane: r = {0}")]
    Domain(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid ensemble: {0}")]
    Ensemble(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Sign of single-signed vorticity data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn admits(self, value: f64) -> bool {
        match self {
            Sign::Positive => value >= 0.0,
            Sign::Negative => value <= 0.0,
        }
    }
}

/// Marker particles carrying conserved relative vorticity `ξ_i` and mass
/// elements `μ_i` (the particle's share of `∬ ω dz dr`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    dim: Dimension,
    positions: Vec<HalfPlanePoint>,
    xi: Vec<f64>,
    mu: Vec<f64>,
    sign: Option<Sign>,
}

impl ParticleEnsemble {
    pub fn new(
        dim: Dimension,
        positions: Vec<HalfPlanePoint>,
        xi: Vec<f64>,
        mu: Vec<f64>,
        sign: Option<Sign>,
    ) -> Result<Self, FieldError> {
        if positions.len() != xi.len() || positions.len() != mu.len() {
            return Err(FieldError::Ensemble(format!(
                "length mismatch: {} positions, {} xi, {} mu",
                positions.len(),
                xi.len(),
                mu.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !(p.r > 0.0) || !p.z.is_finite() || !p.r.is_finite()) {
            return Err(FieldError::Ensemble(format!(
                "particle {i} not in the open half plane: {:?}",
                positions[i]
            )));
        }
        if let Some(sign) = sign {
            if let Some(i) = xi.iter().zip(&mu).position(|(&x, &m)| !sign.admits(x) || !sign.admits(m)) {
                return Err(FieldError::Ensemble(format!("particle {i} violates the {sign:?} sign flag")));
            }
        }
        Ok(Self {
            dim,
            positions,
            xi,
            mu,
            sign,
        })
    }

    pub fn empty(dim: Dimension) -> Self {
        Self {
            dim,
            positions: Vec::new(),
            xi: Vec::new(),
            mu: Vec::new(),
            sign: None,
        }
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[HalfPlanePoint] {
        &self.positions
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sign(&self) -> Option<Sign> {
        self.sign
    }

    /// Same particles at new positions. Only the transport stepper moves
    /// particles; `ξ` and `μ` are carried over untouched.
    pub(crate) fn with_positions(&self, positions: Vec<HalfPlanePoint>) -> Self {
        debug_assert_eq!(positions.len(), self.positions.len());
        Self {
            positions,
            ..self.clone()
        }
    }

    /// `Σ μ_i`.
    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.mu.iter().copied())
    }

    /// Discrete radial impulse `Σ r_i^{d-1} μ_i`, the particle version of
    /// `∬ r^{d-1} ω dz dr`.
    pub fn radial_impulse(&self) -> f64 {
        let k = self.dim.get() as i32 - 1;
        neumaier_sum(self.positions.iter().zip(&self.mu).map(|(p, m)| p.r.powi(k) * m))
    }

    /// `max_i r_i`, or 0 for an empty ensemble.
    pub fn max_radius(&self) -> f64 {
        self.positions.iter().fold(0.0, |m, p| m.max(p.r))
    }

    /// `max_i |ξ_i|`.
    pub fn xi_sup(&self) -> f64 {
        self.xi.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Velocity `(u^r, u^z)` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub point: HalfPlanePoint,
    pub ur: f64,
    pub uz: f64,
}

/// Compensated accumulator: running sum plus the running sum of the
/// exact rounding errors.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    #[inline(always)]
    pub(crate) fn add(&mut self, x: f64) {
        // Branch-free two-sum.
        let t = self.sum + x;
        let xv = t - self.sum;
        self.comp += (self.sum - (t - xv)) + (x - xv);
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Per-source quantities reused by every target.
#[derive(Debug, Clone, Copy)]
struct Source {
    p: HalfPlanePoint,
    inv_r: f64,
    // μ r̄^{d/2-2}
    w_radial: f64,
    // μ r̄^{d/2-1}
    w_axial: f64,
}

fn sources(ens: &ParticleEnsemble) -> Vec<Source> {
    let halves = ens.dim.get() as i32;
    ens.positions
        .iter()
        .zip(&ens.mu)
        .map(|(&p, &mu)| Source {
            p,
            inv_r: 1.0 / p.r,
            w_radial: mu * Dimension::half_power(p.r, halves - 4),
            w_axial: mu * Dimension::half_power(p.r, halves - 2),
        })
        .collect()
}

/// Contribution of one source to the two target sums, before the common
/// factors `-2 c_d r^{-d/2}` and `c_d r^{-d/2}`.
#[inline(always)]
fn pair_terms(target: HalfPlanePoint, s: &Source, eta: f64, kv: KernelValues, a: f64) -> (f64, f64) {
    let radial = s.w_radial * ((target.z - s.p.z) * kv.df);
    let axial = s.w_axial * (a * kv.f + kv.df * (2.0 * (target.r - s.p.r) * s.inv_r - eta));
    (radial, axial)
}

#[inline(always)]
fn finish(dim: Dimension, target: HalfPlanePoint, acc: &[f64; 2]) -> VelocitySample {
    let c = dim.normalization();
    let scale = Dimension::half_power(target.r, -(dim.get() as i32));
    VelocitySample {
        point: target,
        ur: (-2.0 * c * acc[0]) * scale,
        uz: (c * acc[1]) * scale,
    }
}

/// `η` from precomputed reciprocals; symmetric in the two points bit for bit.
#[inline(always)]
fn pair_eta(p: HalfPlanePoint, inv_p: f64, q: HalfPlanePoint, inv_q: f64, delta_sq: f64) -> f64 {
    let dr = p.r - q.r;
    let dz = p.z - q.z;
    (dr * dr + dz * dz + delta_sq) * (inv_p * inv_q)
}

fn kernel_at<K: ProfileKernel + ?Sized>(kernel: &K, eta: f64) -> Result<KernelValues, FieldError> {
    if eta == 0.0 {
        return Err(KernelError::Singularity.into());
    }
    Ok(kernel.profile(eta)?)
}

fn check_dims<K: ProfileKernel + ?Sized>(ens: &ParticleEnsemble, kernel: &K) -> Result<(), FieldError> {
    if ens.dim != kernel.dimension() {
        return Err(FieldError::Precondition(format!(
            "ensemble dimension {} but kernel dimension {}",
            ens.dim,
            kernel.dimension()
        )));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<(), FieldError> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(FieldError::Precondition(format!("regularization length must be >= 0, got {delta}")));
    }
    Ok(())
}

fn target_velocity<K: ProfileKernel + ?Sized>(
    kernel: &K,
    dim: Dimension,
    src: &[Source],
    target: HalfPlanePoint,
    delta_sq: f64,
) -> Result<VelocitySample, FieldError> {
    if !(target.r > 0.0) {
        return Err(FieldError::Domain(target.r));
    }
    let a = dim.half_minus_one();
    let mut acc = [0.0f64; 2];
    let inv_t = 1.0 / target.r;
    for s in src {
        let eta = pair_eta(target, inv_t, s.p, s.inv_r, delta_sq);
        let kv = kernel_at(kernel, eta)?;
        let (ur, uz) = pair_terms(target, s, eta, kv, a);
        acc[0] += ur;
        acc[1] += uz;
    }
    Ok(finish(dim, target, &acc))
}

/// Velocity induced at `p` by the ensemble, with blob regularization `δ`.
pub fn velocity_at<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    p: HalfPlanePoint,
    delta: f64,
) -> Result<VelocitySample, FieldError> {
    check_dims(ens, kernel)?;
    check_delta(delta)?;
    target_velocity(kernel, ens.dim, &sources(ens), p, delta * delta)
}

/// Velocities at many targets; targets are evaluated in parallel but each
/// one is summed over particles in index order, so every entry equals the
/// corresponding [`velocity_at`] bit for bit.
pub fn velocity_field<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    targets: &[HalfPlanePoint],
    delta: f64,
) -> Result<Vec<VelocitySample>, FieldError> {
    check_dims(ens, kernel)?;
    check_delta(delta)?;
    let src = sources(ens);
    let delta_sq = delta * delta;
    targets
        .par_iter()
        .with_min_len(16)
        .map(|&t| target_velocity(kernel, ens.dim, &src, t, delta_sq))
        .collect()
}

/// Velocities at the particles themselves.
///
/// Walks each unordered pair once and feeds both particles from the same
/// kernel lookup. Particle `i` still receives its terms in source order
/// `0..n`, so the result is identical to `velocity_field` evaluated at the
/// particle positions.
pub fn self_velocities<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    delta: f64,
) -> Result<Vec<VelocitySample>, FieldError> {
    check_dims(ens, kernel)?;
    check_delta(delta)?;
    let src = sources(ens);
    let n = src.len();
    let delta_sq = delta * delta;
    let a = ens.dim.half_minus_one();
    let mut acc = vec![[0.0f64; 2]; n];
    for i in 0..n {
        let si = src[i];
        let (head, tail) = acc.split_at_mut(i + 1);
        let acc_i = &mut head[i];
        let eta = pair_eta(si.p, si.inv_r, si.p, si.inv_r, delta_sq);
        let kv = kernel_at(kernel, eta)?;
        let (ur, uz) = pair_terms(si.p, &si, eta, kv, a);
        acc_i[0] += ur;
        acc_i[1] += uz;
        for (sj, acc_j) in src[i + 1..].iter().zip(tail) {
            let eta = pair_eta(si.p, si.inv_r, sj.p, sj.inv_r, delta_sq);
            let kv = kernel_at(kernel, eta)?;
            let (ur, uz) = pair_terms(si.p, sj, eta, kv, a);
            acc_i[0] += ur;
            acc_i[1] += uz;
            let (ur, uz) = pair_terms(sj.p, &si, eta, kv, a);
            acc_j[0] += ur;
            acc_j[1] += uz;
        }
    }
    Ok(src.iter().zip(&acc).map(|(s, a)| finish(ens.dim, s.p, a)).collect())
}

/// Centered finite-difference estimate of `∂_r u^r + ∂_z u^z + (d-2) u^r / r`
/// at `probe`.
pub fn divergence_check<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    probe: HalfPlanePoint,
    h: f64,
    delta: f64,
) -> Result<f64, FieldError> {
    if !(h > 0.0) {
        return Err(FieldError::Precondition(format!("step must be positive, got {h}")));
    }
    if !(probe.r > 2.0 * h) {
        return Err(FieldError::Precondition(format!(
            "probe too close to the axis: r = {} with step {h}",
            probe.r
        )));
    }
    let clearance = (3.0 * delta).max(2.0 * h);
    if let Some(p) = ens.positions().iter().find(|p| {
        let dr = p.r - probe.r;
        let dz = p.z - probe.z;
        (dr * dr + dz * dz).sqrt() <= clearance
    }) {
        return Err(FieldError::Precondition(format!(
            "probe within {clearance} of particle at ({}, {})",
            p.r, p.z
        )));
    }
    let stencil = [
        HalfPlanePoint::new(probe.r + h, probe.z),
        HalfPlanePoint::new(probe.r - h, probe.z),
        HalfPlanePoint::new(probe.r, probe.z + h),
        HalfPlanePoint::new(probe.r, probe.z - h),
        probe,
    ];
    let u = velocity_field(ens, kernel, &stencil, delta)?;
    let dur_dr = (u[0].ur - u[1].ur) / (2.0 * h);
    let duz_dz = (u[2].uz - u[3].uz) / (2.0 * h);
    Ok(dur_dr + duz_dz + (ens.dim.as_f64() - 2.0) * u[4].ur / probe.r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelEvaluator, KernelTable};

    fn dim(d: u32) -> Dimension {
        Dimension::new(d).unwrap()
    }

    fn grid_patch(d: u32, n: usize) -> ParticleEnsemble {
        let h = 1.0 / n as f64;
        let mut pos = Vec::new();
        let mut mu = Vec::new();
        for i in 0..n {
            for k in 0..n {
                let p = HalfPlanePoint::new(1.0 + (i as f64 + 0.5) * h, (k as f64 + 0.5) * h);
                mu.push(p.r.powi(d as i32 - 2) * h * h);
                pos.push(p);
            }
        }
        let xi = vec![1.0; pos.len()];
        ParticleEnsemble::new(dim(d), pos, xi, mu, Some(Sign::Positive)).unwrap()
    }

    #[test]
    fn ensemble_validation() {
        let p = vec![HalfPlanePoint::new(0.0, 0.0)];
        assert!(ParticleEnsemble::new(dim(3), p, vec![1.0], vec![1.0], None).is_err());
        let p = vec![HalfPlanePoint::new(1.0, 0.0)];
        assert!(ParticleEnsemble::new(dim(3), p.clone(), vec![-1.0], vec![-1.0], Some(Sign::Positive)).is_err());
        assert!(ParticleEnsemble::new(dim(3), p, vec![1.0, 2.0], vec![1.0], None).is_err());
    }

    #[test]
    fn empty_ensemble_is_still() {
        let ens = ParticleEnsemble::empty(dim(4));
        let ev = KernelEvaluator::new(dim(4));
        let u = velocity_at(&ens, &ev, HalfPlanePoint::new(1.0, 0.3), 0.0).unwrap();
        assert_eq!((u.ur, u.uz), (0.0, 0.0));
    }

    #[test]
    fn axis_targets_rejected() {
        let ens = grid_patch(3, 2);
        let ev = KernelEvaluator::new(dim(3));
        assert_eq!(
            velocity_at(&ens, &ev, HalfPlanePoint::new(0.0, 0.0), 0.1),
            Err(FieldError::Domain(0.0))
        );
    }

    #[test]
    fn coincident_target_without_regularization_is_singular() {
        let ens = grid_patch(3, 2);
        let ev = KernelEvaluator::new(dim(3));
        let p = ens.positions()[0];
        assert!(matches!(
            velocity_at(&ens, &ev, p, 0.0),
            Err(FieldError::Kernel(KernelError::Singularity))
        ));
    }

    #[test]
    fn self_velocities_match_field_bitwise() {
        let ens = grid_patch(4, 6);
        let table = KernelTable::shared(dim(4)).unwrap();
        let a = self_velocities(&ens, table.as_ref(), 0.05).unwrap();
        let b = velocity_field(&ens, table.as_ref(), ens.positions(), 0.05).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ur.to_bits(), y.ur.to_bits());
            assert_eq!(x.uz.to_bits(), y.uz.to_bits());
        }
    }

    #[test]
    fn divergence_preconditions() {
        let ens = grid_patch(4, 4);
        let ev = KernelEvaluator::new(dim(4));
        assert!(divergence_check(&ens, &ev, HalfPlanePoint::new(0.001, 5.0), 1e-3, 0.0).is_err());
        assert!(divergence_check(&ens, &ev, ens.positions()[0], 1e-3, 0.0).is_err());
        assert!(divergence_check(&ens, &ev, HalfPlanePoint::new(1.625, 0.635), 1e-3, 0.01).is_err());
    }

    #[test]
    fn impulse_and_mass() {
        let ens = grid_patch(3, 10);
        // ∬ r dz dr over [1,2]x[0,1] = 3/2; midpoint rule is exact for r.
        assert!((ens.total_mass() - 1.5).abs() < 1e-13);
        // ∬ r^3 dz dr = 15/4 up to the midpoint error h^2/12 * ∫ 6r.
        assert!((ens.radial_impulse() - 3.75).abs() < 1e-2);
    }
}
