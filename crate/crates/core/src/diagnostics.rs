//! Functionals measured on a running simulation.
//!
//! CSV column contract, one row per record:
//!
//! ```text
//! t, S, impulse, xi_inf, omega_inf_proxy, m@<r_1>, ..., m@<r_n>, ur@<r_1>, ..., ur@<r_n>
//! ```
//!
//! where `<r_k>` are the probe radii in increasing order. Every number is
//! written in the shortest form that parses back to the same `f64`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biot_savart::{velocity_field, FieldError, ParticleEnsemble};
use crate::kernel::{Dimension, HalfPlanePoint, ProfileKernel};
use crate::transport::SimulationState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Vorticity mass outside each radius, `m_r = Σ_{r_i >= r} μ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    // Particle radii in decreasing order.
    radii: Vec<f64>,
    // cumulative[k] = μ summed over radii[0..=k].
    cumulative: Vec<f64>,
}

impl TailProfile {
    pub fn new(ens: &ParticleEnsemble) -> Self {
        let mut order: Vec<usize> = (0..ens.len()).collect();
        let pos = ens.positions();
        order.sort_by(|&a, &b| pos[b].r.total_cmp(&pos[a].r).then(a.cmp(&b)));
        let mut acc = 0.0;
        let cumulative = order
            .iter()
            .map(|&i| {
                acc += ens.mu()[i];
                acc
            })
            .collect();
        Self {
            radii: order.iter().map(|&i| pos[i].r).collect(),
            cumulative,
        }
    }

    /// `m_r`. Accumulating from the outermost particle inward makes this
    /// non-increasing in `r` exactly when all `μ_i` share a sign.
    pub fn mass_above(&self, r: f64) -> f64 {
        let k = self.radii.partition_point(|&x| x >= r);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub step: u64,
    /// Running maximum of the particle radii since `t = 0`.
    pub support: f64,
    /// `(r, m_r)` per probe.
    pub m_probes: Vec<(f64, f64)>,
    /// `Σ r_i^{d-1} μ_i`.
    pub impulse: f64,
    pub xi_inf: f64,
    /// `xi_inf * S^{d-2}`.
    pub omega_inf_proxy: f64,
    /// `(r, |u^r(r, z*)|)` per probe.
    pub ur_profile: Vec<(f64, f64)>,
    pub z_star: f64,
    pub total_mass: f64,
    pub single_signed: bool,
}

impl DiagnosticRecord {
    pub fn tail_mass(&self, r: f64) -> Option<f64> {
        self.m_probes
            .iter()
            .find(|(p, _)| (p - r).abs() <= 1e-12 * r.abs().max(1.0))
            .map(|&(_, m)| m)
    }
}

/// `Σ μ_i z_i / Σ μ_i`, or 0 when the mass vanishes.
pub fn vorticity_centroid_z(ens: &ParticleEnsemble) -> f64 {
    let mass = ens.total_mass();
    if mass == 0.0 {
        return 0.0;
    }
    crate::biot_savart::neumaier_sum(ens.positions().iter().zip(ens.mu()).map(|(p, m)| p.z * m)) / mass
}

pub(crate) fn proxy(xi_inf: f64, support: f64, dim: Dimension) -> f64 {
    xi_inf * support.powi(dim.get() as i32 - 2)
}

/// Records the diagnostics of `state`. Probes must be strictly increasing
/// and non-negative; `u^r` on the axis is reported as 0, its symmetric limit.
pub fn measure<K: ProfileKernel + ?Sized>(
    state: &SimulationState,
    kernel: &K,
    probes: &[f64],
    z_star: Option<f64>,
    delta: f64,
) -> Result<DiagnosticRecord, DiagnosticsError> {
    if probes.iter().any(|r| !(*r >= 0.0)) || probes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DiagnosticsError::Precondition(
            "probe radii must be non-negative and strictly increasing".into(),
        ));
    }
    let ens = state.ensemble();
    let tail = TailProfile::new(ens);
    let z_star = z_star.unwrap_or_else(|| vorticity_centroid_z(ens));
    let targets: Vec<HalfPlanePoint> = probes
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| HalfPlanePoint::new(r, z_star))
        .collect();
    let samples = velocity_field(ens, kernel, &targets, delta)?;
    let mut samples = samples.into_iter();
    let ur_profile = probes
        .iter()
        .map(|&r| (r, if r > 0.0 { samples.next().map_or(0.0, |s| s.ur.abs()) } else { 0.0 }))
        .collect();
    let xi_inf = ens.xi_sup();
    Ok(DiagnosticRecord {
        t: state.t(),
        step: state.step_count(),
        support: state.support(),
        m_probes: probes.iter().map(|&r| (r, tail.mass_above(r))).collect(),
        impulse: ens.radial_impulse(),
        xi_inf,
        omega_inf_proxy: proxy(xi_inf, state.support(), ens.dim()),
        ur_profile,
        z_star,
        total_mass: ens.total_mass(),
        single_signed: ens.sign().is_some(),
    })
}

/// Consumer of diagnostic records during a run.
pub trait DiagnosticSink {
    fn record(&mut self, state: &SimulationState, record: &DiagnosticRecord) -> std::io::Result<()>;

    /// Called once if the run aborts.
    fn failure(&mut self, _t: f64, _message: &str) -> std::io::Result<()> {
        Ok(())
    }

    fn finish(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default, Clone)]
pub struct RecordSeries {
    pub records: Vec<DiagnosticRecord>,
}

impl DiagnosticSink for RecordSeries {
    fn record(&mut self, _state: &SimulationState, record: &DiagnosticRecord) -> std::io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Keeps the full tail profile of every record, so `m_r(t)` is available
/// at any radius after the run.
#[derive(Debug, Default, Clone)]
pub struct TailHistory {
    pub times: Vec<f64>,
    pub profiles: Vec<TailProfile>,
    pub initial_support: f64,
}

impl DiagnosticSink for TailHistory {
    fn record(&mut self, state: &SimulationState, record: &DiagnosticRecord) -> std::io::Result<()> {
        self.initial_support = state.initial_support();
        self.times.push(record.t);
        self.profiles.push(TailProfile::new(state.ensemble()));
        Ok(())
    }
}

pub fn csv_header(probes: &[f64]) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "S", "impulse", "xi_inf", "omega_inf_proxy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(probes.iter().map(|r| format!("m@{r:?}")));
    cols.extend(probes.iter().map(|r| format!("ur@{r:?}")));
    cols
}

pub fn csv_row(record: &DiagnosticRecord) -> Vec<String> {
    let mut row: Vec<String> = [record.t, record.support, record.impulse, record.xi_inf, record.omega_inf_proxy]
        .iter()
        .map(|v| format!("{v:?}"))
        .collect();
    row.extend(record.m_probes.iter().map(|(_, m)| format!("{m:?}")));
    row.extend(record.ur_profile.iter().map(|(_, u)| format!("{u:?}")));
    row
}

/// Writes records as CSV rows; the header is emitted with the first record.
pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
    header_written: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W) -> Self {
        Self {
            writer: csv::WriterBuilder::new().has_headers(false).from_writer(inner),
            header_written: false,
        }
    }

    /// A sink that never writes a header, for appending to an existing file.
    pub fn appending(inner: W) -> Self {
        Self {
            header_written: true,
            ..Self::new(inner)
        }
    }

    /// Writes the header without any rows, for runs that may emit none.
    pub fn write_header(&mut self, probes: &[f64]) -> std::io::Result<()> {
        if !self.header_written {
            self.writer.write_record(csv_header(probes))?;
            self.header_written = true;
        }
        Ok(())
    }

    pub fn into_inner(self) -> std::io::Result<W> {
        self.writer.into_inner().map_err(|e| e.into_error())
    }
}

impl<W: Write> DiagnosticSink for CsvSink<W> {
    fn record(&mut self, _state: &SimulationState, record: &DiagnosticRecord) -> std::io::Result<()> {
        let probes: Vec<f64> = record.m_probes.iter().map(|&(r, _)| r).collect();
        self.write_header(&probes)?;
        self.writer.write_record(csv_row(record))?;
        Ok(())
    }

    fn finish(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

/// `[(1+t) ln(e+t)]`.
pub fn confinement_base(t: f64) -> f64 {
    (1.0 + t) * (std::f64::consts::E + t).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementFit {
    pub times: Vec<f64>,
    pub s_values: Vec<f64>,
    /// `S(t) / [(1+t) ln(e+t)]^{1/(d+1)}`.
    pub ratio_series: Vec<f64>,
    pub c_fit: f64,
    /// Start of the window over which the ratio must not increase.
    pub transient_end: f64,
    pub consistent: bool,
    /// Largest relative increase of the ratio after the transient, or 0.
    pub worst_increase: f64,
}

/// Fits the confinement envelope to the support series.
pub fn confinement_fit(series: &[DiagnosticRecord], dim: Dimension) -> Result<ConfinementFit, DiagnosticsError> {
    let times: Vec<f64> = series.iter().map(|r| r.t).collect();
    let s_values: Vec<f64> = series.iter().map(|r| r.support).collect();
    confinement_fit_series(&times, &s_values, dim)
}

pub fn confinement_fit_series(times: &[f64], s_values: &[f64], dim: Dimension) -> Result<ConfinementFit, DiagnosticsError> {
    if times.is_empty() || times.len() != s_values.len() {
        return Err(DiagnosticsError::Precondition("need a nonempty series of matching length".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DiagnosticsError::Precondition("times must be strictly increasing".into()));
    }
    let p = 1.0 / (dim.as_f64() + 1.0);
    let ratio_series: Vec<f64> = times
        .iter()
        .zip(s_values)
        .map(|(&t, &s)| s / confinement_base(t).powf(p))
        .collect();
    let c_fit = ratio_series.iter().fold(0.0f64, |m, &x| m.max(x));
    let t0 = times[0];
    let transient_end = t0 + 0.1 * (times[times.len() - 1] - t0);
    let mut worst_increase = 0.0f64;
    for k in 1..times.len() {
        if times[k - 1] >= transient_end {
            let inc = (ratio_series[k] - ratio_series[k - 1]) / ratio_series[k - 1];
            worst_increase = worst_increase.max(inc);
        }
    }
    Ok(ConfinementFit {
        times: times.to_vec(),
        s_values: s_values.to_vec(),
        ratio_series,
        c_fit,
        transient_end,
        consistent: worst_increase <= 0.0,
        worst_increase,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupBoundCheck {
    pub pass: bool,
    pub c_fit: f64,
    /// Max over records of proxy / bound.
    pub worst_ratio: f64,
}

/// Relative slack for the rounding in `C^{d-2} [..]^{(d-2)/(d+1)}` versus
/// `(C [..]^{1/(d+1)})^{d-2}`.
pub const IDENTITY_SLACK: f64 = 1e-12;

/// Checks `xi_inf S^{d-2} <= C_fit^{d-2} xi_inf [(1+t) ln(e+t)]^{(d-2)/(d+1)}`.
pub fn sup_vorticity_bound_check(series: &[DiagnosticRecord], dim: Dimension) -> Result<SupBoundCheck, DiagnosticsError> {
    if series.iter().any(|r| !r.single_signed) {
        return Err(DiagnosticsError::Precondition("series comes from a mixed-sign ensemble".into()));
    }
    let fit = confinement_fit(series, dim)?;
    let k = dim.get() as i32 - 2;
    let q = (dim.as_f64() - 2.0) / (dim.as_f64() + 1.0);
    let mut worst_ratio = 0.0f64;
    let mut pass = true;
    for r in series {
        let bound = fit.c_fit.powi(k) * r.xi_inf * confinement_base(r.t).powf(q);
        if r.omega_inf_proxy > bound * (1.0 + IDENTITY_SLACK) {
            pass = false;
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(r.omega_inf_proxy / bound);
        }
    }
    Ok(SupBoundCheck {
        pass,
        c_fit: fit.c_fit,
        worst_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Smallest `C` with `|u^r| <= C [r^{-d} + (r^{d-2}+1) m_{r/2}^{1/2}]` on every sample.
    pub c_fit: f64,
    pub samples: usize,
}

/// Far-field `u^r` envelope driven by the tail mass at half the radius,
/// over all profile samples with `r >= 2 S0` whose `r/2` is also a probe.
pub fn tail_velocity_envelope(series: &[DiagnosticRecord], dim: Dimension, s0: f64) -> Result<EnvelopeFit, DiagnosticsError> {
    if series.iter().any(|r| !r.single_signed) {
        return Err(DiagnosticsError::Precondition("series comes from a mixed-sign ensemble".into()));
    }
    let d = dim.get() as i32;
    let mut c_fit = 0.0f64;
    let mut samples = 0;
    for rec in series {
        for &(r, ur) in &rec.ur_profile {
            if r < 2.0 * s0 {
                continue;
            }
            let Some(m_half) = rec.tail_mass(0.5 * r) else { continue };
            let rhs = r.powi(-d) + (r.powi(d - 2) + 1.0) * m_half.max(0.0).sqrt();
            c_fit = c_fit.max(ur / rhs);
            samples += 1;
        }
    }
    Ok(EnvelopeFit { c_fit, samples })
}

/// Checks a record's internal invariants; returns the first violation.
pub fn check_record(record: &DiagnosticRecord, dim: Dimension) -> Result<(), String> {
    if record.omega_inf_proxy != proxy(record.xi_inf, record.support, dim) {
        return Err("omega_inf_proxy differs from xi_inf * S^(d-2)".into());
    }
    if record.single_signed {
        let masses: Vec<f64> = record.m_probes.iter().map(|&(_, m)| m.abs()).collect();
        if masses.windows(2).any(|w| w[1] > w[0]) {
            return Err("m_r increases with r".into());
        }
        if masses.iter().any(|&m| m > record.total_mass.abs() * (1.0 + 1e-12)) {
            return Err("m_r exceeds the total mass".into());
        }
    }
    Ok(())
}

/// Records whose time is a multiple of `spacing` (to within `1e-9` of the
/// spacing). Used to judge the confinement ratio on fixed probe times.
pub fn on_schedule(series: &[DiagnosticRecord], spacing: f64) -> Vec<DiagnosticRecord> {
    series
        .iter()
        .filter(|r| {
            let k = (r.t / spacing).round();
            (r.t - k * spacing).abs() <= 1e-9 * spacing
        })
        .cloned()
        .collect()
}

/// Checks that the support series never decreases.
pub fn check_support_monotone(series: &[DiagnosticRecord]) -> bool {
    series.windows(2).all(|w| w[1].support >= w[0].support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biot_savart::Sign;

    fn dim(d: u32) -> Dimension {
        Dimension::new(d).unwrap()
    }

    #[test]
    fn schedule_picks_multiples() {
        let series: Vec<DiagnosticRecord> = (0..=20)
            .map(|k| DiagnosticRecord {
                t: k as f64 * 0.1,
                step: k,
                support: 1.0,
                m_probes: vec![],
                impulse: 1.0,
                xi_inf: 1.0,
                omega_inf_proxy: 1.0,
                ur_profile: vec![],
                z_star: 0.0,
                total_mass: 1.0,
                single_signed: true,
            })
            .collect();
        let picked: Vec<u64> = on_schedule(&series, 0.5).iter().map(|r| r.step).collect();
        assert_eq!(picked, vec![0, 5, 10, 15, 20]);
    }

    fn synthetic(times: &[f64], s: impl Fn(f64) -> f64) -> Vec<DiagnosticRecord> {
        let mut running = 0.0f64;
        times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                running = running.max(s(t));
                DiagnosticRecord {
                    t,
                    step: k as u64,
                    support: running,
                    m_probes: vec![],
                    impulse: 1.0,
                    xi_inf: 1.0,
                    omega_inf_proxy: proxy(1.0, running, dim(3)),
                    ur_profile: vec![],
                    z_star: 0.0,
                    total_mass: 1.0,
                    single_signed: true,
                }
            })
            .collect()
    }

    fn grid(n: usize, t_end: f64) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn constant_support_is_consistent() {
        let fit = confinement_fit(&synthetic(&grid(100, 10.0), |_| 2.0), dim(3)).unwrap();
        assert!(fit.consistent);
        assert!(fit.ratio_series.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(fit.c_fit, fit.ratio_series[0]);
    }

    #[test]
    fn square_root_growth_is_inconsistent() {
        let series = synthetic(&grid(100, 10.0), |t| (1.0 + t).sqrt());
        let fit = confinement_fit(&series, dim(3)).unwrap();
        assert!(!fit.consistent);
        assert!(fit.worst_increase > 0.0);
    }

    #[test]
    fn sup_bound_holds_and_scales() {
        let mut series = synthetic(&grid(50, 10.0), |t| 1.0 + 0.1 * t.sqrt());
        let check = sup_vorticity_bound_check(&series, dim(3)).unwrap();
        assert!(check.pass);
        for r in &mut series {
            r.xi_inf *= 2.0;
            r.omega_inf_proxy = proxy(r.xi_inf, r.support, dim(3));
        }
        let doubled = sup_vorticity_bound_check(&series, dim(3)).unwrap();
        assert!(doubled.pass);
        assert_eq!(doubled.c_fit, check.c_fit);
    }

    #[test]
    fn sup_bound_fails_when_proxy_exceeds_fit() {
        let mut series = synthetic(&grid(50, 10.0), |_| 1.0);
        series[30].omega_inf_proxy *= 4.0;
        assert!(!sup_vorticity_bound_check(&series, dim(3)).unwrap().pass);
        series[30].single_signed = false;
        assert!(sup_vorticity_bound_check(&series, dim(3)).is_err());
    }

    #[test]
    fn confinement_fit_rejects_unordered_times() {
        assert!(confinement_fit_series(&[0.0, 1.0, 1.0], &[1.0; 3], dim(4)).is_err());
        assert!(confinement_fit_series(&[], &[], dim(4)).is_err());
    }

    #[test]
    fn tail_profile_edges() {
        let ens = ParticleEnsemble::new(
            dim(3),
            vec![HalfPlanePoint::new(1.0, 0.0), HalfPlanePoint::new(2.0, 0.0), HalfPlanePoint::new(1.5, 1.0)],
            vec![1.0; 3],
            vec![0.5, 0.25, 0.125],
            Some(Sign::Positive),
        )
        .unwrap();
        let tail = TailProfile::new(&ens);
        assert_eq!(tail.mass_above(0.0), 0.875);
        assert_eq!(tail.mass_above(1.5), 0.375);
        assert_eq!(tail.mass_above(2.0), 0.25);
        assert_eq!(tail.mass_above(2.0 + 1e-9), 0.0);
    }
}
