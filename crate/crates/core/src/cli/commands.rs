//! The four workflows behind the command line. Each returns a report and an
//! exit status instead of printing or exiting, so they can be driven from
//! tests and examples.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::certificate::{assemble_certificate, AssemblyGrid, CertificateError, IssCertificate, Verdict};
use crate::family::{norm, SwitchedFamily};
use crate::ratefn::{uniform_grid, PowerCombination};
use crate::signal::{check_adt, check_signal_bounds, read_signal_csv, write_signal_csv, SignalError, SwitchingSignal};
use crate::sim::{
    batch_map, check_cascade, check_envelope, run_seed, BatchSpec, CascadeLabel, RunStatus, RunSummary, SimError,
    Trajectory,
};

use super::config::{parse_config, ConfigError, ProjectConfig, SignalSource, SimulationSettings};
use super::report::Report;

/// Process exit status; the numeric values are a stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// Certified, generated, or simulated without incident.
    Success,
    /// Checked and refused, diverged, or infeasible.
    Refused,
    /// The input could not be used.
    Invalid,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Refused => 1,
            ExitStatus::Invalid => 2,
        }
    }

    fn worst(self, other: ExitStatus) -> ExitStatus {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Missing(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Signal(SignalError::Infeasible(_)) => ExitStatus::Refused,
            _ => ExitStatus::Invalid,
        }
    }
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides the simulation seed of the project file.
    pub seed: Option<u64>,
    pub allow_divergence: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            seed: None,
            allow_divergence: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub status: ExitStatus,
    pub report: Report,
    pub artifacts: Vec<PathBuf>,
}

const SEC4_CONFIG: &str = include_str!("../../configs/example_sec4.json");
const SCALAR_CONFIG: &str = include_str!("../../configs/scalar_linear.json");

/// Project files shipped with the crate, by name.
pub fn bundled_config(name: &str) -> Option<&'static str> {
    match name {
        "example_sec4" => Some(SEC4_CONFIG),
        "scalar_linear" => Some(SCALAR_CONFIG),
        _ => None,
    }
}

pub fn load_bundled(name: &str) -> Result<ProjectConfig, CliError> {
    let text = bundled_config(name).ok_or_else(|| CliError::Missing(format!("no bundled config named {name}")))?;
    Ok(parse_config(text, Path::new("."))?)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_report(report: &Report, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    report.write_to(&path).map_err(io_err(&path))?;
    Ok(path)
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_coefficients(pairs: &[(f64, f64)]) -> String {
    if pairs.is_empty() {
        return "none".into();
    }
    pairs
        .iter()
        .map(|(p, c)| format!("s^{p}: {c:e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

// ---------------------------------------------------------------------------
// check

/// Sampled checks of the Lyapunov data, the comparability constants and
/// the gain. Returns whether all of them passed.
pub fn family_checks(cfg: &ProjectConfig, rep: &mut Report) -> Result<bool, CliError> {
    let fam = &cfg.family;
    let c = &cfg.checks;
    let mut ok = true;
    rep.push("state_box", format!("{} x {}", fmt_point(&c.state_box.lower), fmt_point(&c.state_box.upper)));
    rep.push("input_box", format!("{} x {}", fmt_point(&c.input_box.lower), fmt_point(&c.input_box.upper)));
    for sub in fam.subsystems() {
        let m = sub.index;
        let sandwich = fam
            .check_lyapunov_sandwich(m, &c.state_box, c.samples, c.seed)
            .map_err(CertificateError::from)?;
        let decay = fam
            .check_lyapunov_decay(m, &c.state_box, &c.input_box, c.samples, c.seed)
            .map_err(CertificateError::from)?;
        for (name, r) in [("sandwich", &sandwich), ("decay", &decay)] {
            ok &= r.passed();
            let mut line = format!(
                "{} ({} of {} samples violate, worst margin {:e}",
                pass_fail(r.passed()),
                r.violations.len(),
                r.samples,
                r.worst_margin
            );
            if let (false, Some(p)) = (r.passed(), &r.worst_point) {
                line.push_str(&format!(" at {}", fmt_point(p)));
            }
            line.push(')');
            rep.push(format!("{name}_mode{m}"), line);
        }
    }
    for e in fam.edges() {
        let r = fam
            .check_mu_compatibility(e, &c.state_box, c.samples, c.seed)
            .map_err(CertificateError::from)?;
        ok &= r.pass;
        rep.push(
            format!("mu_{}_{}", e.0, e.1),
            format!("{} (mu {}, sampled max ratio {:.6})", pass_fail(r.pass), r.mu, r.mu_hat),
        );
    }
    let g = fam.check_gain_candidate(c.gain_r_max, c.gain_points);
    ok &= g.pass;
    if g.pass {
        rep.push("gain", "pass");
    } else {
        rep.push("gain", format!("fail ({})", g.problems.join("; ")));
    }
    rep.push("assumptions_verified", ok);
    Ok(ok)
}

/// Result of [`check_with_signal`].
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub status: ExitStatus,
    pub report: Report,
    pub certificate: Option<IssCertificate>,
}

/// Sampled family checks, signal-bound checks and certificate assembly for
/// an already resolved signal. Writes nothing.
pub fn check_with_signal(cfg: &ProjectConfig, sig: &SwitchingSignal) -> Result<CheckOutcome, CliError> {
    let cs = cfg
        .certificate
        .as_ref()
        .ok_or_else(|| CliError::Missing("check needs a certificate block".into()))?;
    let bounds = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| CliError::Missing("check needs a bounds block".into()))?;
    let mut rep = Report::new("check", &cfg.name);
    let p = cfg.family.partition_modes();
    rep.push("modes", cfg.family.num_modes());
    rep.push("stable_modes", format!("{:?}", p.stable));
    rep.push("unstable_modes", format!("{:?}", p.unstable));
    let assumptions = family_checks(cfg, &mut rep)?;

    let horizon = cfg.signal_horizon();
    let h = cfg.grid_step();
    let br = check_signal_bounds(sig, bounds, horizon, h)?;
    rep.push("signal_source", cfg.signal.as_ref().map_or("none".into(), |s| s.kind().to_string()));
    rep.push("signal_switches", sig.num_switches());
    rep.push("signal_horizon", horizon);
    rep.push(
        "signal_bounds",
        match &br.violation {
            None => format!("pass ({} grid points, {} intervals)", br.points, br.intervals),
            Some(v) => format!("fail ({v})"),
        },
    );

    let horizons = cfg.horizons();
    let grid = uniform_grid(cs.condition_s_max, cs.condition_points);
    let asm = assemble_certificate(
        &cfg.family,
        bounds,
        &cs.rho,
        cs.c1,
        AssemblyGrid {
            horizons: &horizons,
            grid: &grid,
        },
        std::slice::from_ref(sig),
    )?;
    let cc = &asm.condition_c1;
    rep.push("rho", &cs.rho);
    rep.push("c1", cs.c1);
    rep.push("condition_lhs", &cc.lhs);
    rep.push("condition_lhs_coefficients", fmt_coefficients(&cc.lhs.coefficients()));
    rep.push("condition_margin", &cc.margin);
    rep.push(
        "condition_margin_supremum",
        match cc.supremum.at {
            Some(s) => format!("{:e} at s={s}", cc.supremum.value),
            None => "unbounded".into(),
        },
    );
    rep.push("condition_exact", pass_fail(cc.exact_pass));
    rep.push(
        "condition_grid",
        format!(
            "{} ({} points on [0, {}], worst slack {:e} at s={})",
            pass_fail(cc.grid_pass),
            cc.grid.len(),
            cs.condition_s_max,
            cc.grid_worst_slack,
            cc.grid_worst_s
        ),
    );
    if let Some(claimed) = &cs.claimed_lhs {
        let mut pc = PowerCombination::new();
        for &(c, p) in claimed {
            pc.add_term(c, p);
        }
        let mut gap: f64 = 0.0;
        for &(p, _) in pc.coefficients().iter().chain(cc.lhs.coefficients().iter()) {
            gap = gap.max((pc.coefficient(p) - cc.lhs.coefficient(p)).abs());
        }
        gap = gap.max(cc.lhs.constant().abs());
        let matches = gap <= 1e-9;
        rep.push("claimed_lhs", &pc);
        rep.push("claimed_lhs_coefficients", fmt_coefficients(&pc.coefficients()));
        rep.push("recomputed_lhs", &cc.lhs);
        rep.push("claimed_lhs_matches_recomputed", matches);
        rep.push("claimed_lhs_max_coefficient_gap", format!("{gap:e}"));
        if !matches {
            rep.push(
                "claimed_lhs_note",
                "the stated combination differs from direct arithmetic on the declared rates, decay rates and mu values; the recomputed value is used",
            );
        }
    }
    for (i, s) in asm.summability.iter().enumerate() {
        rep.push(
            format!("summability_signal{i}"),
            format!(
                "{} (c2 {:.6}, tail change {:e}, {} horizons up to {})",
                if s.summable { "settled" } else { "not settled" },
                s.c2,
                s.tail_change,
                s.horizons.len(),
                s.horizons.last().copied().unwrap_or(0.0)
            ),
        );
    }
    let mut status = ExitStatus::Success;
    let certificate = match &asm.verdict {
        Verdict::Certified(c) => {
            rep.push("verdict", "certified");
            rep.push("certificate_c", c.c);
            rep.push("certificate_c1", c.c1);
            rep.push("certificate_c2", c.c2);
            rep.push("certificate_rho", &c.rho);
            rep.push("certificate_psi2_bar", c.psi2_bar);
            rep.push("certificate_alpha", format!("{}*r^{}", c.alpha_lower.a, c.alpha_lower.p));
            rep.push(
                "certificate_beta",
                format!("{}*r^{} * exp({} - rho(s))", c.alpha_upper.a, c.alpha_upper.p, c.c + c.c1),
            );
            rep.push("certificate_chi", format!("({}) * {}", c.gain, c.psi2_bar));
            rep.push(
                "certificate_uniform_over",
                format!(
                    "{} signal(s), {} horizons, offsets {}",
                    c.uniform_over.signals, c.uniform_over.horizons, c.uniform_over.bound_offsets
                ),
            );
            Some((**c).clone())
        }
        Verdict::Refused(r) => {
            rep.push("verdict", "refused");
            rep.push("failed_condition", format!("{:?}", r.failed));
            rep.push("witness", &r.witness);
            status = ExitStatus::Refused;
            None
        }
    };
    if !assumptions {
        rep.push("assumption_note", "sampled Lyapunov checks failed; the certificate premises are not verified");
        status = ExitStatus::Refused;
    }
    if !br.passed() {
        status = ExitStatus::Refused;
    }
    if certificate.is_some() && status != ExitStatus::Success {
        rep.push("verdict_overall", "refused (premises not verified)");
    }
    rep.push("exit_code", status.code());
    Ok(CheckOutcome {
        status,
        report: rep,
        certificate: certificate.filter(|_| status == ExitStatus::Success),
    })
}

/// Runs every check and writes `check_report.txt`; exit 0 iff a certificate
/// is issued and its premises pass the sampled checks.
pub fn cmd_check(cfg: &ProjectConfig, opts: &RunOptions) -> Result<CommandOutcome, CliError> {
    prepare_out(&opts.out_dir)?;
    let sig = cfg.resolve_signal()?;
    let out = check_with_signal(cfg, &sig)?;
    let path = write_report(&out.report, &opts.out_dir, "check_report.txt")?;
    Ok(CommandOutcome {
        status: out.status,
        report: out.report,
        artifacts: vec![path],
    })
}

// ---------------------------------------------------------------------------
// generate

/// Generates the configured signal, verifies the CSV round trip and the
/// bounds it was generated under, then writes `signal.csv`.
pub fn cmd_generate(cfg: &ProjectConfig, opts: &RunOptions) -> Result<CommandOutcome, CliError> {
    prepare_out(&opts.out_dir)?;
    let mut rep = Report::new("generate", &cfg.name);
    let source = cfg
        .signal
        .as_ref()
        .ok_or_else(|| CliError::Missing("generate needs a signal block".into()))?;
    rep.push("signal_source", source.kind());
    let sig = match cfg.resolve_signal() {
        Ok(s) => s,
        Err(e) => {
            rep.push("generation", format!("infeasible ({e})"));
            rep.push("exit_code", ExitStatus::Refused.code());
            let path = write_report(&rep, &opts.out_dir, "generate_report.txt")?;
            return Ok(CommandOutcome {
                status: ExitStatus::Refused,
                report: rep,
                artifacts: vec![path],
            });
        }
    };
    let (status, artifacts) = emit_signal(cfg, source, &sig, opts, &mut rep)?;
    let mut artifacts = artifacts;
    rep.push("exit_code", status.code());
    artifacts.push(write_report(&rep, &opts.out_dir, "generate_report.txt")?);
    Ok(CommandOutcome {
        status,
        report: rep,
        artifacts,
    })
}

fn emit_signal(
    cfg: &ProjectConfig,
    source: &SignalSource,
    sig: &SwitchingSignal,
    opts: &RunOptions,
    rep: &mut Report,
) -> Result<(ExitStatus, Vec<PathBuf>), CliError> {
    let mut buf = Vec::new();
    write_signal_csv(sig, &mut buf)?;
    let back = read_signal_csv(buf.as_slice())?;
    let mut again = Vec::new();
    write_signal_csv(&back, &mut again)?;
    let round_trip = back == *sig && again == buf;
    rep.push("switches", sig.num_switches());
    rep.push("csv_round_trip", pass_fail(round_trip));

    let horizon = cfg.signal_horizon();
    let h = cfg.grid_step();
    let check = match (source, &cfg.bounds) {
        (SignalSource::Adt(o), _) => Some(("adt_check", check_adt(&back, o.tau_a, o.n0, o.horizon, o.grid_step)?)),
        (_, Some(b)) => Some(("signal_bounds", check_signal_bounds(&back, b, horizon, h)?)),
        (_, None) => None,
    };
    let mut status = if round_trip { ExitStatus::Success } else { ExitStatus::Refused };
    match check {
        Some((name, r)) => {
            rep.push(
                name,
                match &r.violation {
                    None => format!("pass ({} grid points, {} intervals, horizon {horizon})", r.points, r.intervals),
                    Some(v) => format!("fail ({v})"),
                },
            );
            if !r.passed() {
                status = ExitStatus::Refused;
            }
        }
        None => rep.push("signal_bounds", "not checked (no bounds block)"),
    }
    let path = opts.out_dir.join("signal.csv");
    if status == ExitStatus::Success {
        fs::write(&path, &buf).map_err(io_err(&path))?;
        rep.push("signal_csv", path.display());
        Ok((status, vec![path]))
    } else {
        Ok((status, Vec::new()))
    }
}

// ---------------------------------------------------------------------------
// simulate

/// Aggregated outcome of a batch, shared by `simulate` and the benchmark
/// reproduction.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub summaries: Vec<RunSummary>,
    pub envelope_points: usize,
    pub envelope_violations: usize,
    pub envelope_worst_margin: f64,
    pub cascade_verified: usize,
    pub cascade_failed: usize,
    pub cascade_unverified: usize,
    pub cascade_reasons: Vec<String>,
    /// `(t, ‖x(t)‖ per run)` on a thinned grid, when requested.
    pub norms: Option<(Vec<f64>, Vec<Vec<f64>>)>,
}

struct RunResult {
    summary: RunSummary,
    envelope: Option<(usize, usize, f64)>,
    cascade: Option<CascadeLabel>,
    norms: Option<(Vec<f64>, Vec<f64>)>,
    csv: Option<Result<PathBuf, String>>,
}

fn thinned_norms(traj: &Trajectory, stride: usize) -> (Vec<f64>, Vec<f64>) {
    let idx: Vec<usize> = (0..traj.len())
        .filter(|&k| k % stride == 0 || k + 1 == traj.len())
        .collect();
    (
        idx.iter().map(|&k| traj.times[k]).collect(),
        idx.iter().map(|&k| norm(traj.state(k))).collect(),
    )
}

/// Runs the configured batch along `sig`, checking the envelope of `cert`
/// and the cascade bound per run.
pub fn run_batch(
    cfg: &ProjectConfig,
    sim: &SimulationSettings,
    sig: &SwitchingSignal,
    cert: Option<&IssCertificate>,
    seed: u64,
    csv_dir: Option<&Path>,
    norm_stride: Option<usize>,
) -> Result<BatchOutcome, CliError> {
    let checks = &cfg.checks;
    let spec = BatchSpec {
        family: &cfg.family,
        signal: sig,
        input: &sim.input,
        initial_box: &sim.initial_box,
        n_runs: sim.n_runs,
        seed,
        t_end: sim.t_end,
        dt: sim.dt,
    };
    let fam: &SwitchedFamily = &cfg.family;
    let results = batch_map(spec, |run, traj| {
        let summary = RunSummary::of(run, run_seed(seed, run), traj);
        let envelope = cert.map(|c| {
            let r = check_envelope(traj, c, traj.input_sup());
            (r.points, r.violations.len(), r.worst_margin)
        });
        let cascade = sim
            .cascade_check
            .then(|| check_cascade(traj, fam, sig, checks.samples, checks.seed).label);
        let norms = norm_stride.map(|s| thinned_norms(traj, s));
        let csv = csv_dir.map(|dir| {
            let path = dir.join(format!("run_{run:03}.csv"));
            fs::File::create(&path)
                .map_err(|e| e.to_string())
                .and_then(|f| traj.write_csv_strided(io::BufWriter::new(f), sim.csv_stride).map_err(|e| e.to_string()))
                .map(|_| path)
        });
        RunResult {
            summary,
            envelope,
            cascade,
            norms,
            csv,
        }
    })?;

    let mut out = BatchOutcome {
        summaries: Vec::with_capacity(results.len()),
        envelope_points: 0,
        envelope_violations: 0,
        envelope_worst_margin: f64::NEG_INFINITY,
        cascade_verified: 0,
        cascade_failed: 0,
        cascade_unverified: 0,
        cascade_reasons: Vec::new(),
        norms: None,
    };
    let mut times = None;
    let mut series = Vec::new();
    for r in results {
        if let Some((p, v, w)) = r.envelope {
            out.envelope_points += p;
            out.envelope_violations += v;
            out.envelope_worst_margin = out.envelope_worst_margin.max(w);
        }
        match r.cascade {
            Some(CascadeLabel::Verified { passed: true }) => out.cascade_verified += 1,
            Some(CascadeLabel::Verified { passed: false }) => out.cascade_failed += 1,
            Some(CascadeLabel::AssumptionUnverified { reasons }) => {
                out.cascade_unverified += 1;
                for reason in reasons {
                    let check = reason.split(':').next().unwrap_or_default().to_string();
                    if !out.cascade_reasons.iter().any(|r| r.split(':').next() == Some(check.as_str())) {
                        out.cascade_reasons.push(reason);
                    }
                }
            }
            None => {}
        }
        if let Some((t, n)) = r.norms {
            times.get_or_insert(t);
            series.push(n);
        }
        if let Some(Err(e)) = r.csv {
            return Err(CliError::Missing(format!("writing trajectory CSV: {e}")));
        }
        out.summaries.push(r.summary);
    }
    out.norms = times.map(|t| (t, series));
    Ok(out)
}

fn write_summary_csv(path: &Path, summaries: &[RunSummary], d: usize) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Missing(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["run".to_string(), "seed".to_string()];
    header.extend((1..=d).map(|i| format!("x0_{i}")));
    header.extend(["initial_norm", "sup_norm", "final_norm", "status"].map(String::from));
    w.write_record(&header).map_err(err)?;
    for s in summaries {
        let mut row = vec![s.run.to_string(), s.seed.to_string()];
        row.extend(s.x0.iter().map(f64::to_string));
        row.push(s.initial_norm.to_string());
        row.push(s.sup_norm.to_string());
        row.push(s.final_norm.to_string());
        row.push(match &s.status {
            RunStatus::Completed => "completed".into(),
            RunStatus::Diverged { time } => format!("diverged at {time}"),
            RunStatus::DomainError { time, error } => format!("domain error at {time}: {error}"),
        });
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_norms_csv(path: &Path, times: &[f64], series: &[Vec<f64>]) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Missing(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..series.len()).map(|i| format!("run_{i:03}")));
    w.write_record(&header).map_err(err)?;
    for (k, t) in times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(series.iter().map(|s| s.get(k).map_or(String::new(), f64::to_string)));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

fn summarize_batch(rep: &mut Report, b: &BatchOutcome, have_cert: bool) {
    let diverged = b.summaries.iter().filter(|s| s.diverged()).count();
    rep.push("runs", b.summaries.len());
    rep.push("diverged_runs", diverged);
    let max_sup = b.summaries.iter().map(|s| s.sup_norm).fold(0.0, f64::max);
    let max_final = b.summaries.iter().map(|s| s.final_norm).fold(0.0, f64::max);
    rep.push("max_sup_norm", max_sup);
    rep.push("max_final_norm", max_final);
    if have_cert {
        rep.push(
            "envelope",
            format!(
                "{} ({} violations over {} points, worst margin {:e})",
                pass_fail(b.envelope_violations == 0),
                b.envelope_violations,
                b.envelope_points,
                b.envelope_worst_margin
            ),
        );
    } else {
        rep.push("envelope", "not checked (no certificate)");
    }
    let checked = b.cascade_verified + b.cascade_failed + b.cascade_unverified;
    if checked == 0 {
        rep.push("cascade", "not checked");
    } else if b.cascade_unverified > 0 {
        rep.push(
            "cascade",
            format!(
                "assumption-unverified in {} of {checked} runs (no pass/fail claim); {} of the other {} runs within the bound",
                b.cascade_unverified,
                b.cascade_verified,
                b.cascade_verified + b.cascade_failed
            ),
        );
        for (i, r) in b.cascade_reasons.iter().enumerate() {
            rep.push(format!("cascade_reason{i}"), r);
        }
    } else {
        rep.push(
            "cascade",
            format!("{} ({} of {checked} runs within the bound)", pass_fail(b.cascade_failed == 0), b.cascade_verified),
        );
    }
}

fn batch_status(b: &BatchOutcome, allow_divergence: bool) -> ExitStatus {
    let diverged = b.summaries.iter().any(|s| s.diverged());
    if (diverged && !allow_divergence) || b.envelope_violations > 0 || b.cascade_failed > 0 {
        ExitStatus::Refused
    } else {
        ExitStatus::Success
    }
}

/// Seeded batch simulation with per-run CSVs (unless `summary_only`),
/// `summary.csv`, and envelope and cascade checks.
pub fn cmd_simulate(cfg: &ProjectConfig, opts: &RunOptions) -> Result<CommandOutcome, CliError> {
    let sim = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::Missing("simulate needs a simulation block".into()))?;
    prepare_out(&opts.out_dir)?;
    let sig = cfg.resolve_signal()?;
    let mut rep = Report::new("simulate", &cfg.name);
    let cert = match (&cfg.certificate, &cfg.bounds) {
        (Some(_), Some(_)) => {
            let c = check_with_signal(cfg, &sig)?;
            rep.push("certificate", if c.certificate.is_some() { "issued" } else { "not issued" });
            c.certificate
        }
        _ => {
            rep.push("certificate", "not requested");
            None
        }
    };
    let seed = opts.seed.unwrap_or(sim.seed);
    rep.push("seed", seed);
    rep.push("t_end", sim.t_end);
    rep.push("dt", sim.dt);
    rep.push("signal_switches", sig.num_switches());
    let mut artifacts = Vec::new();
    let csv_dir = (!sim.summary_only).then(|| opts.out_dir.join("trajectories"));
    if let Some(d) = &csv_dir {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let batch = run_batch(cfg, sim, &sig, cert.as_ref(), seed, csv_dir.as_deref(), None)?;
    if let Some(d) = &csv_dir {
        artifacts.extend((0..sim.n_runs).map(|i| d.join(format!("run_{i:03}.csv"))));
    }
    summarize_batch(&mut rep, &batch, cert.is_some());
    let summary = opts.out_dir.join("summary.csv");
    write_summary_csv(&summary, &batch.summaries, cfg.family.state_dim())?;
    artifacts.push(summary);
    let status = batch_status(&batch, opts.allow_divergence);
    rep.push("exit_code", status.code());
    artifacts.push(write_report(&rep, &opts.out_dir, "simulate_report.txt")?);
    Ok(CommandOutcome {
        status,
        report: rep,
        artifacts,
    })
}

// ---------------------------------------------------------------------------
// benchmark reproduction

/// Generates the benchmark signal, runs the checks and the 50-run batch,
/// and writes `signal.csv`, `check_report.txt`, `summary.csv` and
/// `norms.csv`. Exit 0 iff the signal meets its bounds, no run diverges,
/// and every final norm is below 1% of the initial norm plus 10.
pub fn cmd_reproduce_benchmark(cfg: &ProjectConfig, opts: &RunOptions) -> Result<CommandOutcome, CliError> {
    let start = Instant::now();
    let sim = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| CliError::Missing("the benchmark needs a simulation block".into()))?;
    let source = cfg
        .signal
        .as_ref()
        .ok_or_else(|| CliError::Missing("the benchmark needs a signal block".into()))?;
    prepare_out(&opts.out_dir)?;
    let mut rep = Report::new("reproduce", &cfg.name);
    let mut artifacts = Vec::new();

    let sig = cfg.resolve_signal()?;
    let mut gen_rep = Report::default();
    let (gen_status, gen_files) = emit_signal(cfg, source, &sig, opts, &mut gen_rep)?;
    artifacts.extend(gen_files);
    rep.append(&gen_rep);

    let check = check_with_signal(cfg, &sig)?;
    artifacts.push(write_report(&check.report, &opts.out_dir, "check_report.txt")?);
    rep.push("check_verdict", check.report.get("verdict").unwrap_or("none"));
    rep.push("check_exit_code", check.status.code());
    for key in ["condition_lhs", "claimed_lhs", "claimed_lhs_matches_recomputed", "assumptions_verified"] {
        if let Some(v) = check.report.get(key) {
            rep.push(key, v);
        }
    }

    let seed = opts.seed.unwrap_or(sim.seed);
    let stride = ((0.1 / sim.dt).round() as usize).max(1);
    let batch = run_batch(cfg, sim, &sig, check.certificate.as_ref(), seed, None, Some(stride))?;
    summarize_batch(&mut rep, &batch, check.certificate.is_some());
    let summary = opts.out_dir.join("summary.csv");
    write_summary_csv(&summary, &batch.summaries, cfg.family.state_dim())?;
    artifacts.push(summary);
    if let Some((t, series)) = &batch.norms {
        let path = opts.out_dir.join("norms.csv");
        write_norms_csv(&path, t, series)?;
        artifacts.push(path);
    }

    let worst_excess = batch
        .summaries
        .iter()
        .map(|s| s.final_norm - 0.01 * s.initial_norm)
        .fold(f64::NEG_INFINITY, f64::max);
    let no_divergence = batch.summaries.iter().all(|s| !s.diverged());
    let settles = worst_excess <= 10.0;
    rep.push("final_norm_minus_1pct_initial_max", worst_excess);
    rep.push("final_norms_settle", pass_fail(settles));
    let elapsed = start.elapsed().as_secs_f64();
    rep.push("runtime_seconds", format!("{elapsed:.2}"));

    let mut status = gen_status;
    if !no_divergence && !opts.allow_divergence {
        status = status.worst(ExitStatus::Refused);
    }
    if !settles {
        status = status.worst(ExitStatus::Refused);
    }
    rep.push("exit_code", status.code());
    artifacts.push(write_report(&rep, &opts.out_dir, "reproduce_report.txt")?);
    Ok(CommandOutcome {
        status,
        report: rep,
        artifacts,
    })
}
