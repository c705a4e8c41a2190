use std::f64::consts::E;

use crate::kernel::{log_grid, Dimension};

use super::{InequalityReport, LabError};

/// Every positive integer in `[τ ln y, τ ln y + 1]`.
pub fn lemma34a_choice(tau: u32, y: f64) -> Vec<u64> {
    let x = tau as f64 * y.ln();
    let lo = x.ceil().max(1.0);
    let hi = (x + 1.0).floor();
    if x >= 0.0 {
        assert!(hi >= lo, "no integer in [{x}, {}]", x + 1.0);
    }
    if hi < lo {
        return Vec::new();
    }
    (lo as u64..=hi as u64).collect()
}

/// Checks `y^{τ/k} k <= 2e(τ+1) ln(e+y)` for every admissible `k` at each
/// grid point. Grid points below the reported `y0` are allowed to fail;
/// `y0` is the smallest grid value from which every larger point passes.
pub fn verify_lemma34a(tau: u32, y_grid: &[f64]) -> Result<InequalityReport, LabError> {
    if tau == 0 {
        return Err(LabError::Precondition("tau must be >= 1".into()));
    }
    if y_grid.is_empty() || y_grid.iter().any(|&y| !(y > 0.0 && y.is_finite())) {
        return Err(LabError::Precondition("y grid must be non-empty, positive and finite".into()));
    }
    let mut ys = y_grid.to_vec();
    ys.sort_by(f64::total_cmp);
    let constant = 2.0 * E * (tau as f64 + 1.0);
    let ratios: Vec<f64> = ys
        .iter()
        .map(|&y| {
            let ks = lemma34a_choice(tau, y);
            if ks.is_empty() {
                return f64::INFINITY;
            }
            let rhs = constant * (E + y).ln();
            ks.iter()
                .map(|&k| y.powf(tau as f64 / k as f64) * k as f64 / rhs)
                .fold(0.0, f64::max)
        })
        .collect();
    let first_good = ratios.iter().rposition(|&q| q > 1.0).map_or(0, |i| i + 1);
    let mut rep = InequalityReport::new(
        "elementary bound (a)",
        format!("tau={tau}, {} y in [{:.3e}, {:.3e}]", ys.len(), ys[0], ys[ys.len() - 1]),
    )
    .with_fit("C", constant);
    if first_good == ys.len() {
        rep.pass = false;
        rep.worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
        rep.notes.push("no grid point above which the bound holds".into());
        return Ok(rep);
    }
    rep = rep.with_fit("y0", ys[first_good]);
    rep.worst_ratio = ratios[first_good..].iter().copied().fold(0.0, f64::max);
    if first_good > 0 {
        rep.notes.push(format!("{first_good} grid points below y0 fail"));
    }
    rep.pass = rep.worst_ratio <= 1.0;
    Ok(rep)
}

/// Constants of the auxiliary claim `ln[e + α((1+x)ln(e+x))^{1/(d+1)}] / ln(e+x) <= C0 (1 + √α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimConstant {
    /// `sup_x ((1+x) ln(e+x))^{1/(d+1)} / √(1+x)`, found on a grid.
    pub c: f64,
    /// `ln max{c, 2 + √e}`.
    pub c_prime: f64,
    /// `2 max{C', 1}`.
    pub c0: f64,
    /// Largest sampled value of the claim's left side over `1 + √α`.
    pub sampled_sup: f64,
}

fn root_base(x: f64) -> f64 {
    (1.0 + x) * (E + x).ln()
}

/// Computes `c` by grid maximization and the derived `C'`, `C0`, then samples
/// the claim over `α ∈ [1e-6, 1e6]` and `x ∈ [0, 1e6]`.
pub fn claim_constant(dim: Dimension) -> ClaimConstant {
    let inv = 1.0 / (dim.as_f64() + 1.0);
    let mut xs = vec![0.0];
    xs.extend(log_grid(1e-8, 1e8, 4000));
    let c = xs
        .iter()
        .map(|&x| root_base(x).powf(inv) / (1.0 + x).sqrt())
        .fold(0.0, f64::max);
    let c_prime = c.max(2.0 + E.sqrt()).ln();
    let c0 = 2.0 * c_prime.max(1.0);
    let mut sampled_sup = 0.0f64;
    for alpha in log_grid(1e-6, 1e6, 200) {
        for &x in xs.iter().step_by(10) {
            let lhs = (E + alpha * root_base(x).powf(inv)).ln() / (E + x).ln();
            sampled_sup = sampled_sup.max(lhs / (1.0 + alpha.sqrt()));
        }
    }
    ClaimConstant {
        c,
        c_prime,
        c0,
        sampled_sup,
    }
}

/// Solves `B = A / (C0 (1 + √A))^{1/(d+1)}` for `A` by bisection; the right
/// side is increasing in `A`.
pub fn solve_a_for_b(dim: Dimension, c0: f64, b: f64) -> Result<f64, LabError> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(LabError::Precondition(format!("B must be positive, got {b}")));
    }
    let inv = 1.0 / (dim.as_f64() + 1.0);
    let g = |a: f64| a / (c0 * (1.0 + a.sqrt())).powf(inv);
    let mut hi = 1.0;
    while g(hi) < b {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// With `A` from [`solve_a_for_b`], checks `y >= B[(1+x) ln(e+y)]^{1/(d+1)}`
/// at `y = A[(1+x) ln(e+x)]^{1/(d+1)}` for every grid `x`. Also checks the
/// sampled claim against `C0`.
pub fn verify_lemma34b(dim: Dimension, b: f64, x_grid: &[f64]) -> Result<InequalityReport, LabError> {
    if x_grid.is_empty() || x_grid.iter().any(|&x| !(0.0..=1e6).contains(&x)) {
        return Err(LabError::Precondition("x grid must be non-empty and inside [0, 1e6]".into()));
    }
    let claim = claim_constant(dim);
    let a = solve_a_for_b(dim, claim.c0, b)?;
    let inv = 1.0 / (dim.as_f64() + 1.0);
    let worst = x_grid
        .iter()
        .map(|&x| {
            let y = a * root_base(x).powf(inv);
            b * ((1.0 + x) * (E + y).ln()).powf(inv) / y
        })
        .fold(0.0, f64::max);
    let mut rep = InequalityReport::new(
        "elementary bound (b)",
        format!("d={dim}, B={b}, {} x in [0, 1e6]", x_grid.len()),
    )
    .with_fit("A", a)
    .with_fit("c", claim.c)
    .with_fit("C0", claim.c0)
    .with_fit("claim_sup", claim.sampled_sup);
    rep.worst_ratio = worst;
    rep.pass = worst <= 1.0 && claim.sampled_sup <= claim.c0;
    if claim.sampled_sup > claim.c0 {
        rep.notes.push("sampled claim exceeds C0".into());
    }
    Ok(rep)
}
