use serde::{Deserialize, Serialize};

use crate::biot_savart::{velocity_field, ParticleEnsemble};
use crate::diagnostics::vorticity_centroid_z;
use crate::kernel::{fit_decay_slope, log_grid, HalfPlanePoint, KernelEvaluator, ProfileKernel};

use super::{InequalityReport, LabError};

/// Allowed relative change of a fitted constant under grid refinement.
pub const REFINEMENT_TOL: f64 = 0.25;

fn relative_change(coarse: f64, fine: f64) -> f64 {
    if coarse == fine {
        0.0
    } else {
        (fine - coarse).abs() / coarse.abs().max(fine.abs())
    }
}

/// Fits the small- and large-`s` slopes of `log |F_d'|`.
///
/// Expected slopes are `−1` below `s = 1e-3` and `−(d/2 + 1)` above `s = 1e2`;
/// each must be met within `tol`.
pub fn verify_kernel_slopes<K: ProfileKernel + ?Sized>(kernel: &K, tol: f64) -> Result<InequalityReport, LabError> {
    let dim = kernel.dimension();
    let small = fit_decay_slope(kernel, &log_grid(1e-6, 1e-3, 40))?;
    let large = fit_decay_slope(kernel, &log_grid(1e2, 1e5, 40))?;
    let expected_large = -(0.5 * dim.as_f64() + 1.0);
    let mut rep = InequalityReport::new(
        "kernel derivative decay",
        format!("d={dim}, 40 log-spaced s in [1e-6, 1e-3] and [1e2, 1e5]"),
    )
    .with_fit("slope_small", small)
    .with_fit("slope_large", large);
    rep.worst_ratio = ((small + 1.0).abs().max((large - expected_large).abs())) / tol;
    rep.pass = rep.worst_ratio <= 1.0;
    Ok(rep)
}

/// Compares `F_d'` with centred differences of `F_d` at 50 log-spaced points
/// in `[1e-4, 1e4]`. The error allowed at each point is
/// `max(rel_tol |F'|, abs_tol)`.
pub fn verify_kernel_derivative(
    evaluator: &KernelEvaluator,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<InequalityReport, LabError> {
    let mut worst = 0.0f64;
    for s in log_grid(1e-4, 1e4, 50) {
        let h = 1e-5 * s;
        let fd = (evaluator.eval_fd(s + h)? - evaluator.eval_fd(s - h)?) / (2.0 * h);
        let exact = evaluator.eval_fd_prime(s)?;
        worst = worst.max((fd - exact).abs() / (rel_tol * exact.abs()).max(abs_tol));
    }
    let mut rep = InequalityReport::new(
        "kernel derivative consistency",
        format!("d={}, 50 log-spaced s in [1e-4, 1e4]", evaluator.dim()),
    );
    rep.worst_ratio = worst;
    rep.pass = worst <= 1.0;
    Ok(rep)
}

fn kernel_bound_constant<K: ProfileKernel + ?Sized>(kernel: &K, n: usize) -> Result<f64, LabError> {
    let p = 0.5 * kernel.dimension().as_f64() + 1.0;
    let mut c = 0.0f64;
    for s in log_grid(1e-8, 1e8, n) {
        let env = (1.0 / s).min(s.powf(-p));
        c = c.max(kernel.profile_derivative(s)?.abs() / env);
    }
    Ok(c)
}

/// Fits `C` in `|F_d'(s)| <= C min{1/s, s^{−(d/2+1)}}` over `s ∈ [1e-8, 1e8]`
/// with 200 and 400 log-spaced points.
pub fn verify_kernel_bound<K: ProfileKernel + ?Sized>(kernel: &K) -> Result<InequalityReport, LabError> {
    let coarse = kernel_bound_constant(kernel, 200)?;
    let fine = kernel_bound_constant(kernel, 400)?;
    let change = relative_change(coarse, fine);
    let mut rep = InequalityReport::new(
        "kernel derivative envelope",
        format!("d={}, 200 then 400 log-spaced s in [1e-8, 1e8]", kernel.dimension()),
    )
    .with_fit("C", fine)
    .with_fit("C_coarse", coarse)
    .with_fit("refinement_change", change);
    rep.worst_ratio = change / REFINEMENT_TOL;
    rep.pass = fine.is_finite() && change <= REFINEMENT_TOL;
    Ok(rep)
}

/// Target grid for the patch velocity check: `n` log-spaced radii by `n`
/// uniformly spaced heights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub n: usize,
}

impl PatchGrid {
    pub fn points(&self) -> Vec<HalfPlanePoint> {
        let rs = log_grid(self.r_min, self.r_max, self.n);
        let mut out = Vec::with_capacity(self.n * self.n);
        for &r in &rs {
            for k in 0..self.n {
                let z = self.z_min + (self.z_max - self.z_min) * k as f64 / (self.n - 1) as f64;
                out.push(HalfPlanePoint::new(r, z));
            }
        }
        out
    }

    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n, ..*self }
    }
}

/// Default grid around an ensemble: radii from `S0/8` to `32 S0`, heights
/// within `4 S0` of the vorticity centroid.
pub fn patch_sample_grid(ens: &ParticleEnsemble, n: usize) -> PatchGrid {
    let s0 = ens.max_radius();
    let zc = vorticity_centroid_z(ens);
    PatchGrid {
        r_min: s0 / 8.0,
        r_max: 32.0 * s0,
        z_min: zc - 4.0 * s0,
        z_max: zc + 4.0 * s0,
        n,
    }
}

fn patch_constant<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    grid: &PatchGrid,
    delta: f64,
) -> Result<f64, LabError> {
    let d = ens.dim().get() as i32;
    let field = velocity_field(ens, kernel, &grid.points(), delta)?;
    Ok(field
        .iter()
        .map(|v| v.ur.abs() / (v.point.r.powi(-d) + v.point.r.sqrt().recip()))
        .fold(0.0, f64::max))
}

/// Fits `C` in `|u^r| <= C (r^{−d} + r^{−1/2})` on `grid` and on its
/// refinement; passes when the fine-grid value is finite and within
/// [`REFINEMENT_TOL`] of the coarse one.
pub fn verify_patch_velocity_bound<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    grid: &PatchGrid,
    delta: f64,
) -> Result<InequalityReport, LabError> {
    if ens.is_empty() || ens.sign().is_none() {
        return Err(LabError::Precondition("patch ensemble must be non-empty and single-signed".into()));
    }
    if !(grid.r_min > 0.0 && grid.r_max > grid.r_min && grid.z_max > grid.z_min && grid.n >= 2) {
        return Err(LabError::Precondition(format!("bad target grid {grid:?}")));
    }
    let coarse = patch_constant(ens, kernel, grid, delta)?;
    let fine_grid = grid.refined();
    let fine = patch_constant(ens, kernel, &fine_grid, delta)?;
    let change = relative_change(coarse, fine);
    let mut rep = InequalityReport::new(
        "patch radial velocity envelope",
        format!(
            "d={}, N={}, r in [{:.4}, {:.4}] log, z in [{:.4}, {:.4}], {n}x{n} then {m}x{m}",
            ens.dim(),
            ens.len(),
            grid.r_min,
            grid.r_max,
            grid.z_min,
            grid.z_max,
            n = grid.n,
            m = fine_grid.n
        ),
    )
    .with_fit("C", fine)
    .with_fit("C_coarse", coarse)
    .with_fit("refinement_change", change);
    rep.worst_ratio = change / REFINEMENT_TOL;
    rep.pass = fine.is_finite() && change <= REFINEMENT_TOL;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biot_savart::velocity_at;
    use crate::config::RunConfig;
    use crate::initial::build_initial_ensemble;
    use crate::kernel::{Dimension, KernelTable};

    fn patch(d: u32, n: usize) -> ParticleEnsemble {
        let mut cfg = RunConfig::new(Dimension::new(d).unwrap());
        cfg.n_target = n;
        build_initial_ensemble(&cfg).unwrap().0
    }

    #[test]
    fn far_field_sample_sits_under_fitted_envelope() {
        let ens = patch(5, 400);
        let kernel = KernelTable::shared(ens.dim()).unwrap();
        let grid = patch_sample_grid(&ens, 16);
        let rep = verify_patch_velocity_bound(&ens, kernel.as_ref(), &grid, 0.05).unwrap();
        let c = rep.fitted("C").unwrap();
        assert!(c.is_finite() && c > 0.0);
        let r = 32.0 * ens.max_radius();
        let v = velocity_at(&ens, kernel.as_ref(), HalfPlanePoint::new(r, 0.5), 0.05).unwrap();
        assert!(v.ur.abs() <= c * (r.powi(-5) + r.sqrt().recip()));
    }

    #[test]
    fn radial_velocity_decays_in_z() {
        let ens = patch(4, 200);
        let kernel = KernelTable::shared(ens.dim()).unwrap();
        let near = velocity_at(&ens, kernel.as_ref(), HalfPlanePoint::new(1.5, 3.0), 0.0).unwrap();
        let far = velocity_at(&ens, kernel.as_ref(), HalfPlanePoint::new(1.5, 300.0), 0.0).unwrap();
        assert!(far.ur.abs() < 1e-4 * near.ur.abs());
    }

    #[test]
    fn unsigned_ensemble_is_rejected() {
        let ens = ParticleEnsemble::new(
            Dimension::new(3).unwrap(),
            vec![HalfPlanePoint::new(1.0, 0.0)],
            vec![1.0],
            vec![1.0],
            None,
        )
        .unwrap();
        let kernel = KernelTable::shared(ens.dim()).unwrap();
        let grid = patch_sample_grid(&ens, 4);
        assert!(verify_patch_velocity_bound(&ens, kernel.as_ref(), &grid, 0.0).is_err());
    }

    #[test]
    fn kernel_checks_pass_for_d3() {
        let ev = KernelEvaluator::new(Dimension::new(3).unwrap());
        assert!(verify_kernel_slopes(&ev, 0.1).unwrap().pass);
        assert!(verify_kernel_derivative(&ev, 1e-6, 1e-10).unwrap().pass);
        assert!(verify_kernel_bound(&ev).unwrap().pass);
    }
}
