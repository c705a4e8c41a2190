use crate::diagnostics::{DiagnosticRecord, TailHistory};
use crate::kernel::Dimension;

use super::{InequalityReport, LabError};

/// A time series of tail masses `m_r(t)`.
pub trait TailSeries {
    fn times(&self) -> &[f64];
    /// `m_r` at sample `k`, or `None` if the series cannot resolve radius `r`.
    fn tail_mass(&self, k: usize, r: f64) -> Option<f64>;
    fn initial_support(&self) -> f64;
}

impl TailSeries for TailHistory {
    fn times(&self) -> &[f64] {
        &self.times
    }

    fn tail_mass(&self, k: usize, r: f64) -> Option<f64> {
        self.profiles.get(k).map(|p| p.mass_above(r))
    }

    fn initial_support(&self) -> f64 {
        self.initial_support
    }
}

/// Diagnostic records viewed as a tail series; only the probe radii are
/// available.
#[derive(Debug, Clone)]
pub struct ProbeSeries<'a> {
    records: &'a [DiagnosticRecord],
    times: Vec<f64>,
    s0: f64,
}

impl<'a> ProbeSeries<'a> {
    pub fn new(records: &'a [DiagnosticRecord], s0: f64) -> Self {
        Self {
            records,
            times: records.iter().map(|r| r.t).collect(),
            s0,
        }
    }
}

impl TailSeries for ProbeSeries<'_> {
    fn times(&self) -> &[f64] {
        &self.times
    }

    fn tail_mass(&self, k: usize, r: f64) -> Option<f64> {
        self.records.get(k).and_then(|rec| rec.tail_mass(r))
    }

    fn initial_support(&self) -> f64 {
        self.s0
    }
}

/// `∫_{t_0}^{t_k} f` by the trapezoid rule, for every `k`.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for k in 0..values.len() {
        if k > 0 {
            acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// `r2 / ((r2 − r1)² r1^d)`, the factor of the tail recursion without its constant.
fn j_factor(dim: Dimension, r1: f64, r2: f64) -> f64 {
    r2 / ((r2 - r1).powi(2) * r1.powi(dim.get() as i32))
}

fn mass_series<S: TailSeries + ?Sized>(series: &S, r: f64) -> Result<Vec<f64>, LabError> {
    (0..series.times().len())
        .map(|k| {
            series
                .tail_mass(k, r)
                .map(f64::abs)
                .ok_or_else(|| LabError::Precondition(format!("series has no tail mass at r={r}")))
        })
        .collect()
}

fn check_times(times: &[f64], min_samples: usize) -> Result<(), LabError> {
    if times.len() < min_samples {
        return Err(LabError::Resolution(format!(
            "{} samples, need at least {min_samples}",
            times.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::Precondition("sample times must increase strictly".into()));
    }
    Ok(())
}

/// `left / right` with `0/0 = 0` and `x/0 = ∞`.
fn ratio(left: f64, right: f64) -> f64 {
    if left == 0.0 {
        0.0
    } else if right > 0.0 {
        left / right
    } else {
        f64::INFINITY
    }
}

/// Smallest `C` with `m_{r2}(t) <= C J(r1, r2) ∫_0^t m_{r1}` at every sample.
///
/// The fitted value is reported as `C`; it is zero when the tail beyond `r2`
/// stays empty. Fails if no finite `C` exists.
pub fn verify_tail_recursion<S: TailSeries + ?Sized>(
    series: &S,
    r1: f64,
    r2: f64,
    dim: Dimension,
) -> Result<InequalityReport, LabError> {
    let s0 = series.initial_support();
    if !(r1 >= s0) {
        return Err(LabError::Precondition(format!("r1={r1} below initial support {s0}")));
    }
    if !(r2 > r1) {
        return Err(LabError::Precondition(format!("need r2 > r1, got ({r1}, {r2})")));
    }
    let times = series.times();
    check_times(times, 2)?;
    let inner = mass_series(series, r1)?;
    let outer = mass_series(series, r2)?;
    let integral = cumulative_trapezoid(times, &inner);
    let j = j_factor(dim, r1, r2);
    let c_fit = outer
        .iter()
        .zip(&integral)
        .map(|(&m, &i)| ratio(m, j * i))
        .fold(0.0, f64::max);
    let mut rep = InequalityReport::new(
        "tail recursion",
        format!(
            "r1={r1:.6}, r2={r2:.6}, {} samples on [{}, {}]",
            times.len(),
            times[0],
            times[times.len() - 1]
        ),
    )
    .with_fit("C", c_fit)
    .with_fit("r1", r1)
    .with_fit("r2", r2);
    rep.pass = c_fit.is_finite();
    if !rep.pass {
        rep.notes.push("tail beyond r2 populated before any mass reached r1".into());
    }
    Ok(rep)
}

/// Ratio of the largest to the smallest positive fitted `C` across reports;
/// `None` if fewer than two are positive and finite.
pub fn pair_stability(reports: &[InequalityReport]) -> Option<f64> {
    let cs: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.fitted("C"))
        .filter(|c| c.is_finite() && *c > 0.0)
        .collect();
    if cs.len() < 2 {
        return None;
    }
    let max = cs.iter().copied().fold(f64::MIN, f64::max);
    let min = cs.iter().copied().fold(f64::MAX, f64::min);
    Some(max / min)
}

/// Checks the iterated tail estimate for `p = 1..=p_max` with a given
/// recursion constant `c`.
///
/// For each `p` the radii `α_j = r(1 − j/(2p))` form a chain of links
/// `m_{α_{j−1}} <= c J(α_j, α_{j−1}) ∫ m_{α_j}`; each link is checked, then the
/// nested chain `m_r <= Π_j c J_j · I^p[m_{r/2}]`, then the closed form
/// `m_r(t) <= (c 2^{d+2} e)^p p^p t^p · 2^{d−1} P / r^{p(d+1)+d−1}` where `P`
/// bounds `r^{d−1} m_r` (the radial impulse). `worst_ratio` is the largest
/// left/right ratio over all three.
pub fn verify_iterated_bound<S: TailSeries + ?Sized>(
    series: &S,
    r: f64,
    dim: Dimension,
    p_max: u32,
    c: f64,
    impulse: f64,
) -> Result<InequalityReport, LabError> {
    let s0 = series.initial_support();
    if !(r >= 2.0 * s0) {
        return Err(LabError::Precondition(format!("r={r} below twice the initial support {s0}")));
    }
    if !(1..=8).contains(&p_max) {
        return Err(LabError::Precondition(format!("p_max must be in 1..=8, got {p_max}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(LabError::Precondition(format!("recursion constant must be positive, got {c}")));
    }
    let times = series.times();
    check_times(times, 10 * p_max as usize + 1)?;
    let t0 = times[0];
    let d = dim.get() as i32;
    let target = mass_series(series, r)?;
    let base = mass_series(series, 0.5 * r)?;

    let mut worst_link = 0.0f64;
    let mut worst_chain = 0.0f64;
    let mut worst_closed = 0.0f64;
    for p in 1..=p_max {
        let alpha: Vec<f64> = (0..=p).map(|j| r * (1.0 - j as f64 / (2.0 * p as f64))).collect();
        let masses: Vec<Vec<f64>> = alpha.iter().map(|&a| mass_series(series, a)).collect::<Result<_, _>>()?;
        let mut prefactor = 1.0;
        for j in 1..=p as usize {
            let jj = c * j_factor(dim, alpha[j], alpha[j - 1]);
            prefactor *= jj;
            let integral = cumulative_trapezoid(times, &masses[j]);
            for (m, i) in masses[j - 1].iter().zip(&integral) {
                worst_link = worst_link.max(ratio(*m, jj * i));
            }
        }
        let mut nested = base.clone();
        for _ in 0..p {
            nested = cumulative_trapezoid(times, &nested);
        }
        let pf = p as f64;
        let closed_scale = (c * 2f64.powi(d + 2) * std::f64::consts::E).powf(pf) * pf.powf(pf) * 2f64.powi(d - 1) * impulse
            / r.powi(p as i32 * (d + 1) + d - 1);
        for k in 0..times.len() {
            worst_chain = worst_chain.max(ratio(target[k], prefactor * nested[k]));
            worst_closed = worst_closed.max(ratio(target[k], closed_scale * (times[k] - t0).powf(pf)));
        }
    }
    let mut rep = InequalityReport::new(
        "iterated tail bound",
        format!("r={r:.6}, p=1..{p_max}, {} samples", times.len()),
    )
    .with_fit("C", c)
    .with_fit("worst_link", worst_link)
    .with_fit("worst_chain", worst_chain)
    .with_fit("worst_closed_form", worst_closed);
    rep.worst_ratio = worst_link.max(worst_chain).max(worst_closed);
    rep.pass = rep.worst_ratio <= 1.0;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Synthetic series: `m_r(t)` is given by a closure.
    struct Synthetic<F: Fn(f64, f64) -> f64> {
        times: Vec<f64>,
        s0: f64,
        m: F,
    }

    impl<F: Fn(f64, f64) -> f64> TailSeries for Synthetic<F> {
        fn times(&self) -> &[f64] {
            &self.times
        }
        fn tail_mass(&self, k: usize, r: f64) -> Option<f64> {
            Some((self.m)(self.times[k], r))
        }
        fn initial_support(&self) -> f64 {
            self.s0
        }
    }

    fn times(n: usize, t_end: f64) -> Vec<f64> {
        (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let t = times(11, 2.0);
        let v: Vec<f64> = t.iter().map(|x| 3.0 * x + 1.0).collect();
        let i = cumulative_trapezoid(&t, &v);
        assert!((i[10] - (6.0 + 2.0)).abs() < 1e-14);
        assert_eq!(i[0], 0.0);
    }

    #[test]
    fn empty_tail_gives_zero_constant() {
        let s = Synthetic {
            times: times(50, 1.0),
            s0: 1.0,
            m: |_, _| 0.0,
        };
        let dim = Dimension::new(4).unwrap();
        let rep = verify_tail_recursion(&s, 1.0, 2.0, dim).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.fitted("C"), Some(0.0));
        let it = verify_iterated_bound(&s, 2.0, dim, 4, 1.0, 1.0).unwrap();
        assert!(it.pass);
        assert_eq!(it.worst_ratio, 0.0);
    }

    #[test]
    fn r1_below_support_is_rejected() {
        let s = Synthetic {
            times: times(5, 1.0),
            s0: 1.5,
            m: |_, _| 0.0,
        };
        let dim = Dimension::new(3).unwrap();
        assert!(matches!(verify_tail_recursion(&s, 1.0, 2.0, dim), Err(LabError::Precondition(_))));
        assert!(matches!(verify_iterated_bound(&s, 2.0, dim, 1, 1.0, 1.0), Err(LabError::Precondition(_))));
    }

    #[test]
    fn fitted_constant_makes_the_bound_tight() {
        // m_{r1} = 1 and m_{r2} = t² e^{-2}: the ratio t e^{-2} / J peaks at t_end.
        let s = Synthetic {
            times: times(201, 2.0),
            s0: 1.0,
            m: |t, r| if r <= 1.0 { 1.0 } else { t * t * (-r).exp() },
        };
        let dim = Dimension::new(3).unwrap();
        let rep = verify_tail_recursion(&s, 1.0, 2.0, dim).unwrap();
        let c = rep.fitted("C").unwrap();
        let expected = 2.0 * (-2.0f64).exp() / 2.0;
        assert!((c - expected).abs() / expected < 1e-12, "{c} vs {expected}");
    }

    #[test]
    fn populated_tail_without_inner_mass_fails() {
        let s = Synthetic {
            times: times(5, 1.0),
            s0: 1.0,
            m: |_, r| if r > 1.5 { 1.0 } else { 0.0 },
        };
        let rep = verify_tail_recursion(&s, 1.0, 2.0, Dimension::new(3).unwrap()).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn single_link_matches_tail_recursion() {
        let s = Synthetic {
            times: times(101, 1.0),
            s0: 1.0,
            m: |t, r| t * (-r * r).exp(),
        };
        let dim = Dimension::new(4).unwrap();
        let rec = verify_tail_recursion(&s, 1.5, 3.0, dim).unwrap();
        let c = rec.fitted("C").unwrap();
        let it = verify_iterated_bound(&s, 3.0, dim, 1, c, 1.0).unwrap();
        assert!((it.fitted("worst_link").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_series_is_a_resolution_error() {
        let s = Synthetic {
            times: times(20, 1.0),
            s0: 1.0,
            m: |_, _| 0.0,
        };
        let r = verify_iterated_bound(&s, 2.0, Dimension::new(3).unwrap(), 3, 1.0, 1.0);
        assert!(matches!(r, Err(LabError::Resolution(_))));
    }

    #[test]
    fn stability_ignores_vacuous_pairs() {
        let mk = |c: f64| InequalityReport::new("t", "g").with_fit("C", c);
        assert_eq!(pair_stability(&[mk(1.0), mk(0.0)]), None);
        assert_eq!(pair_stability(&[mk(1.0), mk(3.0), mk(0.0)]), Some(3.0));
    }
}
