use crate::biot_savart::{neumaier_sum, FieldError, ParticleEnsemble};
use crate::kernel::{Dimension, KernelError, ProfileKernel};

use super::{CutoffFn, InequalityReport, LabError};

pub const SYMMETRIZATION_TOL: f64 = 1e-12;

/// The two evaluations of `g'(t) = d/dt Σ η(r_i) μ_i` on an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetrizationParts {
    /// `Σ_i η'(r_i) μ_i u^r(r_i, z_i)` written out as a double sum.
    pub unsymmetrized: f64,
    /// Half the double sum of the antisymmetrized kernel.
    pub symmetrized: f64,
    pub rel_diff: f64,
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Evaluates `g'` both ways and compares them.
///
/// With `P_ij = (z_i − z_j) F'(η_ij) / (r_i r_j)^{d/2}` the unsymmetrized
/// form is `−2c Σ_i Σ_j η'(r_i) r_j^{d−2} P_ij μ_i μ_j` and the symmetrized
/// one is `−c Σ_i Σ_j [r_j^{d−2} η'(r_i) − r_i^{d−2} η'(r_j)] P_ij μ_i μ_j`.
pub fn symmetrization_check<K: ProfileKernel + ?Sized>(
    ens: &ParticleEnsemble,
    kernel: &K,
    cutoff: &CutoffFn,
    delta: f64,
) -> Result<(SymmetrizationParts, InequalityReport), LabError> {
    let dim = ens.dim();
    if kernel.dimension() != dim {
        return Err(LabError::Precondition("kernel and ensemble dimensions differ".into()));
    }
    if ens.len() > 200 {
        return Err(LabError::Precondition(format!("ensemble has {} > 200 particles", ens.len())));
    }
    let d = dim.get() as i32;
    let pos = ens.positions();
    let mu = ens.mu();
    let n = ens.len();
    let eta_p: Vec<f64> = pos.iter().map(|p| cutoff.eta_prime(p.r)).collect();
    let rd2: Vec<f64> = pos.iter().map(|p| p.r.powi(d - 2)).collect();
    let delta_sq = delta * delta;

    let mut unsym = Vec::with_capacity(n * n);
    let mut sym = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (p, q) = (pos[i], pos[j]);
            let (dr, dz) = (p.r - q.r, p.z - q.z);
            let rr = p.r * q.r;
            let eta = (dr * dr + dz * dz + delta_sq) / rr;
            if eta == 0.0 {
                return Err(FieldError::Kernel(KernelError::Singularity).into());
            }
            let fp = kernel.profile(eta)?.df;
            let pij = dz * fp / Dimension::half_power(rr, d);
            let mm = mu[i] * mu[j];
            unsym.push(eta_p[i] * rd2[j] * pij * mm);
            sym.push((rd2[j] * eta_p[i] - rd2[i] * eta_p[j]) * pij * mm);
        }
    }
    let c = dim.normalization();
    let unsymmetrized = -2.0 * c * neumaier_sum(unsym.into_iter());
    let symmetrized = -c * neumaier_sum(sym.into_iter());
    let parts = SymmetrizationParts {
        unsymmetrized,
        symmetrized,
        rel_diff: relative_difference(unsymmetrized, symmetrized),
    };
    let mut rep = InequalityReport::new(
        "symmetrized tail derivative",
        format!("N={n}, d={dim}, r1={}, r2={}", cutoff.r1(), cutoff.r2()),
    )
    .with_fit("g_prime", symmetrized);
    rep.worst_ratio = parts.rel_diff / SYMMETRIZATION_TOL;
    rep.pass = parts.rel_diff <= SYMMETRIZATION_TOL;
    Ok((parts, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biot_savart::{self_velocities, Sign};
    use crate::kernel::{HalfPlanePoint, KernelEvaluator, KernelTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ensemble(d: u32, n: usize, seed: u64) -> ParticleEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos: Vec<HalfPlanePoint> = (0..n)
            .map(|_| HalfPlanePoint::new(rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        ParticleEnsemble::new(Dimension::new(d).unwrap(), pos, vec![1.0; n], mu, Some(Sign::Positive)).unwrap()
    }

    #[test]
    fn vanishes_when_support_is_inside_r1() {
        let ens = random_ensemble(4, 30, 1);
        let kernel = KernelTable::shared(ens.dim()).unwrap();
        let c = CutoffFn::new(5.0, 6.0).unwrap();
        let (parts, rep) = symmetrization_check(&ens, kernel.as_ref(), &c, 0.0).unwrap();
        assert_eq!(parts.unsymmetrized, 0.0);
        assert_eq!(parts.symmetrized, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn two_particle_forms_agree() {
        let dim = Dimension::new(3).unwrap();
        let ens = ParticleEnsemble::new(
            dim,
            vec![HalfPlanePoint::new(1.2, 0.1), HalfPlanePoint::new(1.7, -0.3)],
            vec![1.0, 1.0],
            vec![0.4, 0.9],
            Some(Sign::Positive),
        )
        .unwrap();
        let kernel = KernelEvaluator::new(dim);
        let c = CutoffFn::new(1.0, 2.0).unwrap();
        let (parts, _) = symmetrization_check(&ens, &kernel, &c, 0.0).unwrap();
        assert!(parts.rel_diff <= 1e-14, "{parts:?}");
        assert!(parts.symmetrized != 0.0);
    }

    #[test]
    fn unsymmetrized_form_matches_self_velocities() {
        let ens = random_ensemble(5, 120, 9);
        let kernel = KernelTable::shared(ens.dim()).unwrap();
        let c = CutoffFn::new(1.0, 2.5).unwrap();
        // The self term has no radial part, so a small blob changes nothing
        // but lets the field path evaluate at the particles.
        let (parts, rep) = symmetrization_check(&ens, kernel.as_ref(), &c, 1e-3).unwrap();
        assert!(rep.pass, "{parts:?}");
        let field = self_velocities(&ens, kernel.as_ref(), 1e-3).unwrap();
        let direct: f64 = field
            .iter()
            .zip(ens.positions().iter().zip(ens.mu()))
            .map(|(v, (p, m))| c.eta_prime(p.r) * m * v.ur)
            .sum();
        assert!((direct - parts.unsymmetrized).abs() <= 1e-10 * direct.abs(), "{direct} {parts:?}");
    }

    #[test]
    fn oversized_ensemble_is_rejected() {
        let ens = random_ensemble(3, 201, 2);
        let kernel = KernelTable::shared(ens.dim()).unwrap();
        let c = CutoffFn::new(1.0, 2.0).unwrap();
        assert!(symmetrization_check(&ens, kernel.as_ref(), &c, 0.0).is_err());
    }
}
