//! Stream-function kernel of the axisymmetric swirl-free Biot–Savart law in
//! dimension `d >= 3`.
//!
//! The Green's function on the half plane factors as
//! `G_d(r, z, r̄, z̄) = c_d (r r̄)^{d/2-1} F_d(s)` with the similarity variable
//! `s = ((r - r̄)^2 + (z - z̄)^2) / (r r̄)` and the profile
//!
//! ```text
//! F_d(s) = ∫_0^π cos θ sin^{d-3} θ / [2(1 - cos θ) + s]^{d/2-1} dθ.
//! ```
//!
//! One integration by parts (the boundary terms vanish because
//! `sin^{d-2}` is zero at both ends) turns this into
//!
//! ```text
//! F_d(s) = ∫_0^π sin^{d-1} θ / [s + 4 sin^2(θ/2)]^{d/2} dθ,
//! ```
//!
//! whose integrand is positive. The evaluator integrates this form and its
//! s-derivatives, so there is no cancellation at large `s`, where the
//! original integrand nearly averages to zero.
//!
//! # Normalization
//!
//! Reducing the Newtonian potential of `R^d` over the `(d-2)`-sphere of the
//! source ring gives `c_d = |S^{d-3}| / ((d-2) |S^{d-1}|)`, and the ratio of
//! sphere areas collapses this to
//!
//! ```text
//! c_d = 1 / (2π)    for every d >= 3.
//! ```
//!
//! With this constant the d = 3 velocity coincides with the classical
//! circular-filament Biot–Savart integral; see [`Dimension::normalization`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("quadrature did not converge at s = {s}: estimate {estimate:e} after {panels} panels")]
    Quadrature {
        s: f64,
        estimate: f64,
        panels: usize,
    },
    #[error("kernel singularity: coincident points")]
    Singularity,
    #[error("invalid evaluator settings: {0}")]
    Settings(String),
    #[error("invalid sample grid: {0}")]
    Grid(String),
}

/// Spatial dimension `d >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dimension(u32);

impl Dimension {
    pub fn new(d: u32) -> Result<Self, KernelError> {
        if d < 3 {
            return Err(KernelError::Domain {
                what: "dimension (d >= 3 required)",
                value: d as f64,
            });
        }
        Ok(Self(d))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// `d/2 - 1`, the exponent of `(r r̄)` in the Green's function.
    pub fn half_minus_one(self) -> f64 {
        0.5 * self.as_f64() - 1.0
    }

    /// The constant `c_d` in front of the Green's function; equal to `1/(2π)`
    /// in every dimension.
    pub fn normalization(self) -> f64 {
        0.5 / PI
    }

    /// `x^(halves/2)` evaluated without `powf` for the half-integer exponents
    /// that appear throughout the kernel.
    pub(crate) fn half_power(x: f64, halves: i32) -> f64 {
        if halves % 2 == 0 {
            x.powi(halves / 2)
        } else {
            x.powi((halves - 1) / 2) * x.sqrt()
        }
    }
}

impl TryFrom<u32> for Dimension {
    type Error = KernelError;
    fn try_from(d: u32) -> Result<Self, Self::Error> {
        Dimension::new(d)
    }
}

impl From<Dimension> for u32 {
    fn from(d: Dimension) -> u32 {
        d.0
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point `(r, z)` of the closed half plane `r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub r: f64,
    pub z: f64,
}

impl HalfPlanePoint {
    pub fn new(r: f64, z: f64) -> Self {
        Self { r, z }
    }

    /// Similarity variable `((r - r̄)^2 + (z - z̄)^2 + δ^2) / (r r̄)`.
    #[inline]
    pub fn similarity(self, other: HalfPlanePoint, delta_sq: f64) -> f64 {
        let dr = self.r - other.r;
        let dz = self.z - other.z;
        (dr * dr + dz * dz + delta_sq) / (self.r * other.r)
    }
}

/// `F_d(s)` and `F_d'(s)` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub f: f64,
    pub df: f64,
}

/// Anything that can produce the kernel profile `F_d` and its derivative.
pub trait ProfileKernel: Sync {
    fn dimension(&self) -> Dimension;
    fn profile(&self, s: f64) -> Result<KernelValues, KernelError>;

    fn profile_derivative(&self, s: f64) -> Result<f64, KernelError> {
        self.profile(s).map(|v| v.df)
    }
}

/// Quadrature-backed evaluator of `F_d`, `F_d'` and `G_d`.
///
/// Immutable after construction. The regime thresholds only choose the
/// initial panel layout: below `s_hi` the panels are graded geometrically
/// toward `θ = 0`, where the integrand has a boundary layer of width `√s`;
/// at or above `s_hi` the integrand is nearly flat and one panel is used.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    dim: Dimension,
    quad_tol: f64,
    s_lo: f64,
    s_hi: f64,
    max_panels: usize,
}

impl KernelEvaluator {
    pub const DEFAULT_TOL: f64 = 1e-12;
    pub const DEFAULT_THRESHOLDS: (f64, f64) = (1e-4, 1e4);

    pub fn new(dim: Dimension) -> Self {
        Self {
            dim,
            quad_tol: Self::DEFAULT_TOL,
            s_lo: Self::DEFAULT_THRESHOLDS.0,
            s_hi: Self::DEFAULT_THRESHOLDS.1,
            max_panels: 4000,
        }
    }

    pub fn with_tolerance(mut self, quad_tol: f64) -> Result<Self, KernelError> {
        if !(quad_tol > 0.0 && quad_tol.is_finite()) {
            return Err(KernelError::Settings(format!("quad_tol must be positive, got {quad_tol}")));
        }
        self.quad_tol = quad_tol;
        Ok(self)
    }

    pub fn with_thresholds(mut self, s_lo: f64, s_hi: f64) -> Result<Self, KernelError> {
        if !(s_lo > 0.0 && s_lo < s_hi && s_hi.is_finite()) {
            return Err(KernelError::Settings(format!(
                "need 0 < s_lo < s_hi, got ({s_lo}, {s_hi})"
            )));
        }
        self.s_lo = s_lo;
        self.s_hi = s_hi;
        Ok(self)
    }

    pub fn with_max_panels(mut self, max_panels: usize) -> Self {
        self.max_panels = max_panels.max(1);
        self
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn tolerance(&self) -> f64 {
        self.quad_tol
    }

    pub fn thresholds(&self) -> (f64, f64) {
        (self.s_lo, self.s_hi)
    }

    /// `F_d(s)`.
    pub fn eval_fd(&self, s: f64) -> Result<f64, KernelError> {
        self.derivative(0, s)
    }

    /// `F_d'(s)`, by differentiation under the integral sign.
    pub fn eval_fd_prime(&self, s: f64) -> Result<f64, KernelError> {
        self.derivative(1, s)
    }

    /// `G_d(p, q) = c_d (r r̄)^{d/2-1} F_d(η)`.
    pub fn eval_g(&self, p: HalfPlanePoint, q: HalfPlanePoint) -> Result<f64, KernelError> {
        green(self, p, q)
    }

    /// The `order`-th derivative `F_d^{(order)}(s)`.
    pub fn derivative(&self, order: u32, s: f64) -> Result<f64, KernelError> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(KernelError::Domain {
                what: "kernel argument s",
                value: s,
            });
        }
        let d = self.dim.get() as i32;
        // Exponent of the denominator, in halves: d/2 + order.
        let halves = d + 2 * order as i32;
        let mut prefactor = 1.0;
        for i in 0..order {
            prefactor *= -(0.5 * d as f64 + i as f64);
        }
        let integrand = |theta: f64| {
            let half_sin = (0.5 * theta).sin();
            let denom = s + 4.0 * half_sin * half_sin;
            theta.sin().powi(d - 1) * Dimension::half_power(denom, -halves)
        };
        let breaks = self.breakpoints(s);
        let q = quadrature::integrate(integrand, &breaks, self.quad_tol, 1e-300, self.max_panels);
        if !q.converged {
            return Err(KernelError::Quadrature {
                s,
                estimate: q.error,
                panels: q.panels,
            });
        }
        Ok(prefactor * q.value)
    }

    fn breakpoints(&self, s: f64) -> Vec<f64> {
        let mut breaks = vec![0.0];
        if s < self.s_hi {
            let mut b = 0.25 * s.sqrt();
            while b < 0.5 * PI {
                breaks.push(b);
                b *= 4.0;
            }
            breaks.push(0.5 * PI);
        }
        if s < self.s_lo {
            // Extra split of the inner panels, where the layer is thinnest.
            let first = breaks[1];
            breaks.insert(1, 0.25 * first);
        }
        breaks.push(PI);
        breaks
    }
}

impl ProfileKernel for KernelEvaluator {
    fn dimension(&self) -> Dimension {
        self.dim
    }

    fn profile(&self, s: f64) -> Result<KernelValues, KernelError> {
        Ok(KernelValues {
            f: self.eval_fd(s)?,
            df: self.eval_fd_prime(s)?,
        })
    }

    fn profile_derivative(&self, s: f64) -> Result<f64, KernelError> {
        self.eval_fd_prime(s)
    }
}

/// `G_d(p, q)` for any profile source.
pub fn green<K: ProfileKernel + ?Sized>(
    kernel: &K,
    p: HalfPlanePoint,
    q: HalfPlanePoint,
) -> Result<f64, KernelError> {
    for pt in [p, q] {
        if !(pt.r > 0.0) {
            return Err(KernelError::Domain {
                what: "radial coordinate",
                value: pt.r,
            });
        }
    }
    let eta = p.similarity(q, 0.0);
    if eta == 0.0 {
        return Err(KernelError::Singularity);
    }
    let dim = kernel.dimension();
    let halves = dim.get() as i32 - 2;
    let f = kernel.profile(eta)?.f;
    Ok(dim.normalization() * Dimension::half_power(p.r * q.r, halves) * f)
}

/// Least-squares slope of `log|F_d'(s)|` against `log s` over `grid`.
///
/// The grid needs at least 8 strictly increasing points spanning two decades.
pub fn fit_decay_slope<K: ProfileKernel + ?Sized>(kernel: &K, grid: &[f64]) -> Result<f64, KernelError> {
    if grid.len() < 8 {
        return Err(KernelError::Grid(format!("need at least 8 points, got {}", grid.len())));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
        return Err(KernelError::Grid("points must be positive and strictly increasing".into()));
    }
    if grid[grid.len() - 1] / grid[0] < 100.0 {
        return Err(KernelError::Grid("grid must span at least two decades".into()));
    }
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for &s in grid {
        xs.push(s.ln());
        ys.push(kernel.profile_derivative(s)?.abs().ln());
    }
    Ok(least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

const OCTAVE_MIN: i32 = -40;
const OCTAVE_MAX: i32 = 40;
const SUB_BITS: u32 = 6;
const SUB_PER_OCTAVE: usize = 1 << SUB_BITS;
const MANTISSA_BITS: u32 = 52;

/// Tabulated `F_d`, `F_d'` for the particle solver.
///
/// Nodes are uniform within each binary octave of `s` (64 per octave over
/// `[2^-40, 2^40]`), so the cell index comes straight from the bits of `s`.
/// Each cell is a quintic Hermite interpolant through `F`, `F'`, `F''` (and
/// `F'`, `F''`, `F'''` for the derivative), stored as monomial coefficients
/// in the cell coordinate. The relative error stays near `1e-12`. Arguments
/// outside the table fall back to quadrature.
#[derive(Debug, Clone)]
pub struct KernelTable {
    evaluator: KernelEvaluator,
    // Per cell: F coefficients of t^0..t^5, then F' coefficients.
    cells: Vec<[f64; 12]>,
}

impl KernelTable {
    pub fn build(evaluator: KernelEvaluator) -> Result<Self, KernelError> {
        let octaves = (OCTAVE_MAX - OCTAVE_MIN) as usize;
        let count = octaves * SUB_PER_OCTAVE + 1;
        let nodes = (0..count)
            .map(|k| {
                let s = Self::node(k);
                Ok([
                    evaluator.derivative(0, s)?,
                    evaluator.derivative(1, s)?,
                    evaluator.derivative(2, s)?,
                    evaluator.derivative(3, s)?,
                ])
            })
            .collect::<Result<Vec<_>, KernelError>>()?;
        let cells = nodes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let h = Self::node(k + 1) - Self::node(k);
                let (a, b) = (&w[0], &w[1]);
                let f = hermite5_coefficients([a[0], h * a[1], h * h * a[2], b[0], h * b[1], h * h * b[2]]);
                let df = hermite5_coefficients([a[1], h * a[2], h * h * a[3], b[1], h * b[2], h * h * b[3]]);
                let mut c = [0.0; 12];
                c[..6].copy_from_slice(&f);
                c[6..].copy_from_slice(&df);
                c
            })
            .collect();
        Ok(Self { evaluator, cells })
    }

    /// Process-wide table for `dim` with default evaluator settings, built on
    /// first use.
    pub fn shared(dim: Dimension) -> Result<Arc<KernelTable>, KernelError> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<KernelTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("kernel table cache poisoned");
        if let Some(t) = guard.get(&dim.get()) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(KernelTable::build(KernelEvaluator::new(dim))?);
        guard.insert(dim.get(), Arc::clone(&table));
        Ok(table)
    }

    pub fn evaluator(&self) -> &KernelEvaluator {
        &self.evaluator
    }

    /// Range of arguments served from the table.
    pub fn range() -> (f64, f64) {
        (2f64.powi(OCTAVE_MIN), 2f64.powi(OCTAVE_MAX))
    }

    fn node(k: usize) -> f64 {
        let octave = OCTAVE_MIN + (k / SUB_PER_OCTAVE) as i32;
        let sub = (k % SUB_PER_OCTAVE) as f64;
        2f64.powi(octave) * (1.0 + sub / SUB_PER_OCTAVE as f64)
    }

    #[inline]
    fn lookup(&self, s: f64) -> Option<KernelValues> {
        let bits = s.to_bits();
        let exponent = ((bits >> MANTISSA_BITS) & 0x7ff) as i32 - 1023;
        if s <= 0.0 || !(OCTAVE_MIN..OCTAVE_MAX).contains(&exponent) {
            return None;
        }
        let frac_bits = MANTISSA_BITS - SUB_BITS;
        let sub = ((bits >> frac_bits) as usize) & (SUB_PER_OCTAVE - 1);
        let k = (exponent - OCTAVE_MIN) as usize * SUB_PER_OCTAVE + sub;
        let t = (bits & ((1u64 << frac_bits) - 1)) as f64 * (1.0 / (1u64 << frac_bits) as f64);
        let c = &self.cells[k];
        // Estrin's scheme: shorter dependency chains than Horner.
        let t2 = t * t;
        let t4 = t2 * t2;
        let f = (c[0] + c[1] * t) + t2 * (c[2] + c[3] * t) + t4 * (c[4] + c[5] * t);
        let df = (c[6] + c[7] * t) + t2 * (c[8] + c[9] * t) + t4 * (c[10] + c[11] * t);
        Some(KernelValues { f, df })
    }
}

impl ProfileKernel for KernelTable {
    fn dimension(&self) -> Dimension {
        self.evaluator.dim()
    }

    #[inline]
    fn profile(&self, s: f64) -> Result<KernelValues, KernelError> {
        match self.lookup(s) {
            Some(v) => Ok(v),
            None => self.fallback(s),
        }
    }
}

impl KernelTable {
    #[cold]
    #[inline(never)]
    fn fallback(&self, s: f64) -> Result<KernelValues, KernelError> {
        self.evaluator.profile(s)
    }
}

/// Quintic Hermite basis on `[0, 1]` in monomial form. Rows: value, first
/// and second derivative weights at the left end, then the same at the
/// right end; columns: coefficients of `t^0..t^5`.
const HERMITE5: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
];

/// Monomial coefficients of the quintic with end data
/// `[p(0), p'(0), p''(0), p(1), p'(1), p''(1)]`.
fn hermite5_coefficients(data: [f64; 6]) -> [f64; 6] {
    let mut c = [0.0; 6];
    for (row, v) in HERMITE5.iter().zip(data) {
        for (ci, w) in c.iter_mut().zip(row) {
            *ci += v * w;
        }
    }
    c
}
