//! SVG plots generated from the diagnostic CSV alone.
//!
//! Output is plain text with coordinates rounded to two decimals, so the
//! same CSV always yields the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use axivort_core::diagnostics::{confinement_base, confinement_fit_series};
use axivort_core::Dimension;

use crate::CliError;

pub const PLOT_FILES: [&str; 4] = ["support.svg", "velocity_profile.svg", "tail_mass.svg", "impulse_drift.svg"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Diagnostic CSV loaded into columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let corrupt = |reason: String| CliError::Io(format!("{}: {reason}", path.display()));
        let mut reader = csv::Reader::from_path(path).map_err(|e| corrupt(e.to_string()))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| corrupt(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.first().map(String::as_str) != Some("t") || !header.iter().any(|h| h == "S") {
            return Err(corrupt("missing t/S columns".into()));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| corrupt(e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| corrupt(e.to_string()))?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// `(radius, column index)` of every column named `<prefix>@<radius>`.
    pub fn probe_columns(&self, prefix: &str) -> Vec<(f64, usize)> {
        self.header
            .iter()
            .enumerate()
            .filter_map(|(k, h)| {
                h.strip_prefix(prefix)
                    .and_then(|rest| rest.strip_prefix('@'))
                    .and_then(|r| r.parse().ok())
                    .map(|r| (r, k))
            })
            .collect()
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

#[derive(Clone, Copy)]
enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn map(self, v: f64) -> Option<f64> {
        match self {
            Scale::Linear => v.is_finite().then_some(v),
            Scale::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
        }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= 1e-300 + 1e-12 * lo.abs() {
        (lo - 0.5 - 0.05 * lo.abs(), hi + 0.5 + 0.05 * hi.abs())
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64, scale: Scale) -> String {
    match scale {
        Scale::Linear => format!("{v:.3e}"),
        Scale::Log => format!("1e{v:.1}"),
    }
}

fn render(title: &str, xlabel: &str, ylabel: &str, xs: Scale, ys: Scale, series: &[Series]) -> String {
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter_map(|&(x, y)| Some((xs.map(x)?, ys.map(y)?)))
                .collect()
        })
        .collect();
    let (x0, x1) = bounds(mapped.iter().flatten().map(|p| p.0));
    let (y0, y1) = bounds(mapped.iter().flatten().map(|p| p.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{tx:.2}" y1="{:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(xv, xs)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{LEFT}" y2="{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 7.0,
            ty + 4.0,
            tick_label(yv, ys)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{ylabel}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (k, (s, pts)) in series.iter().zip(&mapped).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if pts.len() > 1 {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                coords.join(" ")
            );
        } else if let Some(&(x, y)) = pts.first() {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = TOP + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + pw - 150.0,
            ly - 4.0,
            LEFT + pw - 130.0,
            ly - 4.0,
            LEFT + pw - 125.0,
            ly,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn support_plot(table: &CsvTable, dim: Dimension) -> String {
    let t = table.column("t").unwrap_or_default();
    let s = table.column("S").unwrap_or_default();
    let mut series = vec![Series {
        label: "S(t)".into(),
        points: t.iter().copied().zip(s.iter().copied()).collect(),
        dashed: false,
    }];
    if let Ok(fit) = confinement_fit_series(&t, &s, dim) {
        let p = 1.0 / (dim.as_f64() + 1.0);
        series.push(Series {
            label: format!("C [(1+t)ln(e+t)]^(1/{})", dim.get() + 1),
            points: t.iter().map(|&x| (x, fit.c_fit * confinement_base(x).powf(p))).collect(),
            dashed: true,
        });
    }
    render("Support radius and confinement envelope", "t", "S", Scale::Linear, Scale::Linear, &series)
}

fn velocity_plot(table: &CsvTable, dim: Dimension) -> String {
    let probes = table.probe_columns("ur");
    let last = table.rows.last();
    let samples: Vec<(f64, f64)> = match last {
        Some(row) => probes.iter().map(|&(r, k)| (r, row[k].abs())).filter(|&(r, u)| r > 0.0 && u > 0.0).collect(),
        None => Vec::new(),
    };
    let d = dim.get() as i32;
    let envelope = |r: f64| r.powi(-d) + r.sqrt().recip();
    let c = samples.iter().map(|&(r, u)| u / envelope(r)).fold(0.0, f64::max);
    let mut series = vec![Series {
        label: "|u^r| at final time".into(),
        points: samples.clone(),
        dashed: false,
    }];
    if c > 0.0 {
        series.push(Series {
            label: "C (r^-d + r^-1/2)".into(),
            points: samples.iter().map(|&(r, _)| (r, c * envelope(r))).collect(),
            dashed: true,
        });
    }
    render("Radial velocity profile", "r", "|u^r|", Scale::Log, Scale::Log, &series)
}

fn tail_plot(table: &CsvTable) -> String {
    let t = table.column("t").unwrap_or_default();
    let series: Vec<Series> = table
        .probe_columns("m")
        .into_iter()
        .map(|(r, k)| Series {
            label: format!("m at r={r:.4}"),
            points: t.iter().zip(&table.rows).map(|(&x, row)| (x, row[k])).collect(),
            dashed: false,
        })
        .collect();
    render("Tail mass", "t", "m_r(t)", Scale::Linear, Scale::Linear, &series)
}

fn impulse_plot(table: &CsvTable) -> String {
    let t = table.column("t").unwrap_or_default();
    let p = table.column("impulse").unwrap_or_default();
    let points = match p.first() {
        Some(&p0) if p0 != 0.0 => t.iter().zip(&p).map(|(&x, &v)| (x, (v - p0) / p0)).collect(),
        _ => Vec::new(),
    };
    let series = [Series {
        label: "relative impulse drift".into(),
        points,
        dashed: false,
    }];
    render("Radial impulse drift", "t", "(P - P0)/P0", Scale::Linear, Scale::Linear, &series)
}

/// Writes the four plots for `csv` into `out_dir` and returns their paths.
pub fn emit_plots(csv: &Path, dim: Dimension, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let table = CsvTable::read(csv)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let docs = [
        support_plot(&table, dim),
        velocity_plot(&table, dim),
        tail_plot(&table),
        impulse_plot(&table),
    ];
    let mut paths = Vec::new();
    for (name, doc) in PLOT_FILES.iter().zip(docs) {
        let path = out_dir.join(name);
        fs::write(&path, doc).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_columns_are_parsed() {
        let table = CsvTable {
            header: ["t", "S", "m@1.5", "m@3", "ur@1.5"].map(String::from).to_vec(),
            rows: vec![],
        };
        assert_eq!(table.probe_columns("m"), vec![(1.5, 2), (3.0, 3)]);
        assert_eq!(table.probe_columns("ur"), vec![(1.5, 4)]);
    }

    #[test]
    fn empty_series_still_draws_axes() {
        let svg = render("x", "t", "y", Scale::Linear, Scale::Log, &[]);
        assert!(svg.starts_with("<svg") && svg.contains("<rect x="));
        assert!(!svg.contains("polyline"));
    }
}
