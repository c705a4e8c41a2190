use serde::{Deserialize, Serialize};

use super::{InequalityReport, LabError};

/// Smooth radial cutoff `η(s) = 1 − φ((s − r1)/(r2 − r1))` for `s > r1`,
/// zero below, built on the bump `φ(x) = exp(1 + 1/(x² − 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFn {
    r1: f64,
    r2: f64,
}

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 + 1.0 / (x * x - 1.0)).exp()
    }
}

fn bump_prime(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        return 0.0;
    }
    let q = x * x - 1.0;
    bump(x) * (-2.0 * x / (q * q))
}

impl CutoffFn {
    pub fn new(r1: f64, r2: f64) -> Result<Self, LabError> {
        if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
            return Err(LabError::Precondition(format!("need 0 < r1 < r2, got ({r1}, {r2})")));
        }
        Ok(Self { r1, r2 })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    fn width(&self) -> f64 {
        self.r2 - self.r1
    }

    pub fn eta(&self, s: f64) -> f64 {
        if s <= self.r1 {
            0.0
        } else if s >= self.r2 {
            1.0
        } else {
            1.0 - bump((s - self.r1) / self.width())
        }
    }

    pub fn eta_prime(&self, s: f64) -> f64 {
        if s <= self.r1 || s >= self.r2 {
            0.0
        } else {
            -bump_prime((s - self.r1) / self.width()) / self.width()
        }
    }
}

/// Fits `C1 = max |η'|·(r2 − r1)` and
/// `C2 = max |η'(r) − η'(r̄)|·(r2 − r1)² / |r − r̄|` over the grid.
///
/// The Lipschitz quotient is taken over every pair of grid points.
pub fn verify_cutoff_bounds(c: &CutoffFn, grid: &[f64]) -> Result<InequalityReport, LabError> {
    let (lo, hi) = (0.5 * c.r1, 2.0 * c.r2);
    if grid.len() < 1000 {
        return Err(LabError::Precondition(format!("grid needs >= 1000 points, got {}", grid.len())));
    }
    let gmin = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if gmin > lo || gmax < hi {
        return Err(LabError::Precondition(format!(
            "grid [{gmin}, {gmax}] must cover [{lo}, {hi}]"
        )));
    }
    let w = c.width();
    let d: Vec<f64> = grid.iter().map(|&s| c.eta_prime(s)).collect();
    let c1 = d.iter().fold(0.0f64, |m, v| m.max(v.abs())) * w;
    let mut c2 = 0.0f64;
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            let dr = (grid[i] - grid[j]).abs();
            if dr > 0.0 {
                c2 = c2.max((d[i] - d[j]).abs() * w * w / dr);
            }
        }
    }
    let monotone = {
        let mut sorted: Vec<f64> = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).all(|p| c.eta(p[1]) >= c.eta(p[0]))
    };
    let mut rep = InequalityReport::new(
        "cutoff derivative bounds",
        format!("{} radii in [{gmin:.4}, {gmax:.4}], r1={}, r2={}", grid.len(), c.r1, c.r2),
    )
    .with_fit("C1", c1)
    .with_fit("C2", c2);
    rep.pass = c1.is_finite() && c2.is_finite() && monotone;
    if !monotone {
        rep.notes.push("eta is not monotone on the grid".into());
    }
    Ok(rep)
}
