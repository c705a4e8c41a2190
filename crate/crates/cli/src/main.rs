use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use axivort_core::biot_savart::ParticleEnsemble;
use axivort_core::bundle::{ResultsBundle, CSV_FILE, REPORTS_FILE};
use axivort_core::checkpoint::Checkpoint;
use axivort_core::config::RunConfig;
use axivort_core::diagnostics::{
    confinement_fit, on_schedule, sup_vorticity_bound_check, tail_velocity_envelope, CsvSink, DiagnosticRecord,
};
use axivort_core::inequality_lab::{
    self as lab, read_reports, write_reports, CutoffFn, InequalityReport, LabError, ProbeSeries,
};
use axivort_core::initial::build_initial_ensemble;
use axivort_core::kernel::{log_grid, Dimension, HalfPlanePoint, KernelEvaluator, KernelTable};
use axivort_core::transport::{self, RunError, RunOutcome};
use axivort_core::{Sign, SimulationState};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod plot;

/// Confinement is judged on records at multiples of this time.
const CONFINEMENT_PROBE_SPACING: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Precondition(_) | LabError::Resolution(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(_) => CliError::Usage(e.to_string()),
            RunError::Checkpoint(_) | RunError::Sink(_) => CliError::Io(e.to_string()),
            RunError::Diagnostics(_) => CliError::Numerical(e.to_string()),
            RunError::Step { ref checkpoint, .. } => {
                let saved = checkpoint
                    .as_ref()
                    .map(|p| format!(" (last good state saved to {})", p.display()))
                    .unwrap_or_default();
                CliError::Numerical(format!("{e}{saved}"))
            }
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "axivort", version, about = "Vortex-particle runs and estimate checks for axisymmetric Euler flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Lemma {
    #[value(name = "34a")]
    A,
    #[value(name = "34b")]
    B,
    Cutoff,
    Symmetrization,
    Patch,
    Tail,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured run and write its bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Continue a run from a checkpoint file.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Kernel slope, derivative and envelope checks.
    VerifyKernel {
        /// Dimensions to check (default 3 to 8).
        #[arg(long = "d", num_args = 1..)]
        dims: Vec<u32>,
        /// Also write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inequality checks; all but `tail` need no simulation.
    VerifyInequalities {
        #[arg(long, value_enum)]
        lemma: Lemma,
        #[arg(long)]
        tau: Option<u32>,
        #[arg(long)]
        d: Option<u32>,
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long)]
        r1: Option<f64>,
        #[arg(long)]
        r2: Option<f64>,
        /// Particle count for the symmetrization and patch checks.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Diagnostic CSV for the tail check.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw the four diagnostic plots from a CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        d: u32,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Summarize report files; a directory is searched for reports.json.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, output } => cmd_run(&config, output),
        Command::Resume { checkpoint, output } => cmd_resume(&checkpoint, output),
        Command::VerifyKernel { dims, out } => cmd_verify_kernel(dims, out),
        Command::VerifyInequalities {
            lemma,
            tau,
            d,
            b,
            r1,
            r2,
            n,
            seed,
            csv,
            out,
        } => {
            let args = LabArgs {
                tau,
                d,
                b,
                r1,
                r2,
                n,
                seed,
                csv,
            };
            cmd_verify_inequalities(lemma, &args, out)
        }
        Command::Plot { csv, d, out } => {
            let dim = Dimension::new(d).map_err(|e| CliError::Usage(e.to_string()))?;
            for p in plot::emit_plots(&csv, dim, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Report { paths } => cmd_report(&paths),
    }
}

fn dimension(d: u32) -> Result<Dimension, CliError> {
    Dimension::new(d).map_err(|e| CliError::Usage(e.to_string()))
}

fn kernel_for(dim: Dimension) -> Result<std::sync::Arc<KernelTable>, CliError> {
    KernelTable::shared(dim).map_err(|e| CliError::Numerical(e.to_string()))
}

fn print_reports(reports: &[InequalityReport]) {
    for r in reports {
        println!("{}", r.summary_line());
        for note in &r.notes {
            println!("     {note}");
        }
    }
}

fn finish_reports(reports: &[InequalityReport], out: Option<PathBuf>) -> Result<(), CliError> {
    print_reports(reports);
    if let Some(path) = out {
        write_reports(&path, reports).map_err(|e| io_error(&path, e))?;
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} checks failed", reports.len())));
    }
    Ok(())
}

// ------------------------------------------------------------------ run

fn cmd_run(config_path: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| io_error(config_path, e))?;
    let mut config = RunConfig::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    if let Some(dir) = output {
        config.output_dir = dir;
    }
    let (_, summary) = build_initial_ensemble(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "d={} N={} total_mass={:e} S0={} xi_inf={}",
        config.d, summary.n, summary.total_mass, summary.s0, summary.xi_inf
    );
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let csv_path = dir.join(CSV_FILE);
    let file = File::create(&csv_path).map_err(|e| io_error(&csv_path, e))?;
    let mut sink = CsvSink::new(BufWriter::new(file));
    sink.write_header(&config.probes_for(summary.s0)).map_err(|e| io_error(&csv_path, e))?;
    let kernel = kernel_for(config.d)?;
    let started = Instant::now();
    let outcome = transport::run(&config, kernel.as_ref(), &mut [&mut sink]);
    sink.into_inner().and_then(|mut w| w.flush()).map_err(|e| io_error(&csv_path, e))?;
    finish_run(&config, &dir, outcome?, started)
}

fn cmd_resume(checkpoint: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| io_error(checkpoint, e))?;
    let mut ckpt = ckpt;
    if let Some(dir) = output {
        ckpt.config.output_dir = dir;
        ckpt.config_hash = ckpt.config.hash();
    }
    let config = ckpt.config.clone();
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let csv_path = dir.join(CSV_FILE);
    // Keep rows up to the checkpoint and regenerate the rest.
    let kept = match fs::read_to_string(&csv_path) {
        Ok(text) => truncate_csv_after(&text, ckpt.state.t()),
        Err(_) => String::new(),
    };
    let mut file = File::create(&csv_path).map_err(|e| io_error(&csv_path, e))?;
    file.write_all(kept.as_bytes()).map_err(|e| io_error(&csv_path, e))?;
    let mut sink = if kept.is_empty() {
        let mut s = CsvSink::new(BufWriter::new(file));
        let probes = config.probes_for(ckpt.state.initial_support());
        s.write_header(&probes).map_err(|e| io_error(&csv_path, e))?;
        s
    } else {
        CsvSink::appending(BufWriter::new(file))
    };
    println!("resuming at t={} (step {})", ckpt.state.t(), ckpt.state.step_count());
    let kernel = kernel_for(config.d)?;
    let started = Instant::now();
    let outcome = transport::resume(&ckpt, kernel.as_ref(), &mut [&mut sink]);
    sink.into_inner().and_then(|mut w| w.flush()).map_err(|e| io_error(&csv_path, e))?;
    finish_run(&config, &dir, outcome?, started)
}

/// Header plus every row whose time is at most `t`.
fn truncate_csv_after(text: &str, t: f64) -> String {
    let mut out = String::new();
    for (k, line) in text.lines().enumerate() {
        let keep = k == 0
            || line
                .split(',')
                .next()
                .and_then(|f| f.parse::<f64>().ok())
                .is_some_and(|row_t| row_t <= t);
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn finish_run(config: &RunConfig, dir: &Path, outcome: RunOutcome, started: Instant) -> Result<(), CliError> {
    let wall = started.elapsed().as_secs_f64();
    let state: &SimulationState = &outcome.state;
    println!(
        "finished t={} after {} steps, S={}, {} records, {:.1}s",
        state.t(),
        state.step_count(),
        state.support(),
        outcome.records,
        wall
    );
    let csv_path = dir.join(CSV_FILE);
    let table = plot::CsvTable::read(&csv_path)?;
    let records = records_from_csv(&table, state.ensemble().sign().is_some());
    let reports = run_reports(&records, config.d, state.initial_support());
    print_reports(&reports);
    write_reports(&dir.join(REPORTS_FILE), &reports).map_err(|e| io_error(dir, e))?;
    let plots = plot::emit_plots(&csv_path, config.d, &dir.join("plots"))?;

    let mut bundle = ResultsBundle::new(config, wall);
    let rel = |p: &Path| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    bundle.checkpoints = outcome.checkpoints.iter().map(|p| rel(p)).collect();
    bundle.plots = plots.iter().map(|p| rel(p)).collect();
    let path = bundle.save(dir).map_err(|e| CliError::Io(e.to_string()))?;
    bundle.verify_files(dir).map_err(|e| CliError::Io(e.to_string()))?;
    println!("bundle: {}", path.display());
    Ok(())
}

/// Rebuilds records from CSV columns. The CSV has no step, centroid or
/// total-mass columns: `step` is the row index and the other two are NaN.
fn records_from_csv(table: &plot::CsvTable, single_signed: bool) -> Vec<DiagnosticRecord> {
    let col = |name: &str| table.header.iter().position(|h| h == name);
    let (t, s, p, xi, om) = (col("t"), col("S"), col("impulse"), col("xi_inf"), col("omega_inf_proxy"));
    let m_cols = table.probe_columns("m");
    let u_cols = table.probe_columns("ur");
    let get = |row: &[f64], k: Option<usize>| k.map_or(f64::NAN, |k| row[k]);
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| DiagnosticRecord {
            t: get(row, t),
            step: i as u64,
            support: get(row, s),
            m_probes: m_cols.iter().map(|&(r, k)| (r, row[k])).collect(),
            impulse: get(row, p),
            xi_inf: get(row, xi),
            omega_inf_proxy: get(row, om),
            ur_profile: u_cols.iter().map(|&(r, k)| (r, row[k])).collect(),
            z_star: f64::NAN,
            total_mass: f64::NAN,
            single_signed,
        })
        .collect()
}

fn run_reports(records: &[DiagnosticRecord], dim: Dimension, s0: f64) -> Vec<InequalityReport> {
    let mut reports = Vec::new();
    if records.is_empty() {
        return reports;
    }
    let scheduled = on_schedule(records, CONFINEMENT_PROBE_SPACING);
    let series = if scheduled.len() >= 2 { scheduled } else { records.to_vec() };
    if let Ok(fit) = confinement_fit(&series, dim) {
        let mut rep = InequalityReport::new(
            "confinement ratio",
            format!("{} probe times, spacing {CONFINEMENT_PROBE_SPACING}", series.len()),
        );
        rep.fitted = vec![("C_fit".into(), fit.c_fit), ("worst_increase".into(), fit.worst_increase)];
        rep.worst_ratio = fit.ratio_series.iter().copied().fold(0.0, f64::max) / fit.c_fit.max(f64::MIN_POSITIVE);
        rep.pass = fit.consistent;
        reports.push(rep);
    }
    match sup_vorticity_bound_check(records, dim) {
        Ok(sup) => {
            let mut rep = InequalityReport::new("sup vorticity bound", format!("{} records", records.len()));
            rep.fitted = vec![("C_fit".into(), sup.c_fit)];
            rep.worst_ratio = sup.worst_ratio;
            rep.pass = sup.pass;
            reports.push(rep);
        }
        Err(e) => eprintln!("sup vorticity bound skipped: {e}"),
    }
    match tail_velocity_envelope(records, dim, s0) {
        Ok(env) => {
            let mut rep = InequalityReport::new(
                "far-field velocity envelope",
                format!("{} samples with r >= 2 S0", env.samples),
            );
            rep.fitted = vec![("C".into(), env.c_fit)];
            rep.pass = env.c_fit.is_finite();
            reports.push(rep);
        }
        Err(e) => eprintln!("far-field velocity envelope skipped: {e}"),
    }
    reports
}

// ------------------------------------------------------------ verify

fn cmd_verify_kernel(dims: Vec<u32>, out: Option<PathBuf>) -> Result<(), CliError> {
    let dims = if dims.is_empty() { (3..=8).collect() } else { dims };
    let mut reports = Vec::new();
    for d in dims {
        let ev = KernelEvaluator::new(dimension(d)?);
        for mut rep in [
            lab::verify_kernel_slopes(&ev, 0.1)?,
            lab::verify_kernel_derivative(&ev, 1e-6, 1e-10)?,
            lab::verify_kernel_bound(&ev)?,
        ] {
            rep.name = format!("{} d={d}", rep.name);
            reports.push(rep);
        }
    }
    finish_reports(&reports, out)
}

struct LabArgs {
    tau: Option<u32>,
    d: Option<u32>,
    b: Option<f64>,
    r1: Option<f64>,
    r2: Option<f64>,
    n: Option<usize>,
    seed: u64,
    csv: Option<PathBuf>,
}

fn cmd_verify_inequalities(lemma: Lemma, args: &LabArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let wants = |l: Lemma| lemma == l || (lemma == Lemma::All && l != Lemma::Tail);
    let mut reports = Vec::new();
    if wants(Lemma::A) {
        let grid = log_grid(1e2, 1e6, 100);
        for tau in args.tau.map_or(1..=5, |t| t..=t) {
            reports.push(lab::verify_lemma34a(tau, &grid)?);
        }
    }
    if wants(Lemma::B) {
        let mut grid = vec![0.0];
        grid.extend(log_grid(1e-3, 1e6, 199));
        let dims: Vec<u32> = args.d.map_or(vec![3, 4, 5], |d| vec![d]);
        let bs: Vec<f64> = args.b.map_or(vec![0.5, 1.0, 2.0], |b| vec![b]);
        for &d in &dims {
            for &b in &bs {
                reports.push(lab::verify_lemma34b(dimension(d)?, b, &grid)?);
            }
        }
    }
    if wants(Lemma::Cutoff) {
        let c = CutoffFn::new(args.r1.unwrap_or(1.0), args.r2.unwrap_or(2.0))?;
        let (lo, hi) = (0.5 * c.r1(), 2.0 * c.r2());
        let grid: Vec<f64> = (0..2000).map(|i| lo + (hi - lo) * i as f64 / 1999.0).collect();
        reports.push(lab::verify_cutoff_bounds(&c, &grid)?);
    }
    if wants(Lemma::Symmetrization) {
        let dim = dimension(args.d.unwrap_or(3))?;
        let n = args.n.unwrap_or(100);
        let ens = random_ensemble(dim, n, args.seed)?;
        let c = CutoffFn::new(args.r1.unwrap_or(1.0), args.r2.unwrap_or(2.5))?;
        let (_, rep) = lab::symmetrization_check(&ens, kernel_for(dim)?.as_ref(), &c, 0.0)?;
        reports.push(rep);
    }
    if wants(Lemma::Patch) {
        let mut cfg = RunConfig::new(dimension(args.d.unwrap_or(5))?);
        cfg.n_target = args.n.unwrap_or(4096);
        let (ens, _) = build_initial_ensemble(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
        let kernel = kernel_for(cfg.d)?;
        let grid = lab::patch_sample_grid(&ens, 64);
        reports.push(lab::verify_patch_velocity_bound(&ens, kernel.as_ref(), &grid, cfg.delta)?);
    }
    if lemma == Lemma::Tail {
        let csv = args
            .csv
            .as_ref()
            .ok_or_else(|| CliError::Usage("--lemma tail needs --csv".into()))?;
        let (r1, r2) = match (args.r1, args.r2) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(CliError::Usage("--lemma tail needs --r1 and --r2 (probe radii in the CSV)".into())),
        };
        let dim = dimension(args.d.ok_or_else(|| CliError::Usage("--lemma tail needs --d".into()))?)?;
        let table = plot::CsvTable::read(csv)?;
        let records = records_from_csv(&table, true);
        let s0 = records.first().map_or(0.0, |r| r.support);
        reports.push(lab::verify_tail_recursion(&ProbeSeries::new(&records, s0), r1, r2, dim)?);
    }
    finish_reports(&reports, out)
}

fn random_ensemble(dim: Dimension, n: usize, seed: u64) -> Result<ParticleEnsemble, CliError> {
    if !(2..=200).contains(&n) {
        return Err(CliError::Usage(format!("--n must be in 2..=200, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<HalfPlanePoint> = (0..n)
        .map(|_| HalfPlanePoint::new(rng.gen_range(0.5..3.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    ParticleEnsemble::new(dim, pos, vec![1.0; n], mu, Some(Sign::Positive)).map_err(|e| CliError::Usage(e.to_string()))
}

// ------------------------------------------------------------ report

fn cmd_report(paths: &[PathBuf]) -> Result<(), CliError> {
    let mut all = Vec::new();
    for path in paths {
        let file = if path.is_dir() { path.join(REPORTS_FILE) } else { path.clone() };
        let reports = read_reports(&file).map_err(|e| io_error(&file, e))?;
        println!("== {}", file.display());
        if path.is_dir() {
            if let Ok(bundle) = ResultsBundle::load(path) {
                let ok = bundle.verify_files(path);
                println!(
                    "   bundle d={} config {} files {}",
                    bundle.config.d,
                    &bundle.provenance.config_hash[..12],
                    if ok.is_ok() { "ok" } else { "BROKEN" }
                );
                ok.map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
        print_reports(&reports);
        all.extend(reports);
    }
    let failed = all.iter().filter(|r| !r.pass).count();
    println!("{} reports, {} passed, {failed} failed", all.len(), all.len() - failed);
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} reports failed")));
    }
    Ok(())
}
