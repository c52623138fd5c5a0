//! JSON project files: schema, validation, and signal resolution.
//!
//! Loading never stops at the first problem. Each top-level block is
//! deserialized on its own so that schema errors in different blocks are
//! all reported, and semantic checks run on every block that parsed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::expr::{state_input_vars, Expr};
use crate::family::{Edge, PowerBound, SampleBox, SubsystemSpec, SwitchedFamily};
use crate::ratefn::{RateFunction, RateTerm};
use crate::signal::{
    generate_adt_signal, generate_admissible_signal, generate_worst_case_signal, read_signal_csv, AdmissibleOptions,
    AdtOptions, ModeBound, RateBoundSet, SignalError, SwitchingSignal, WorstCaseOptions,
};
use crate::sim::InputSignal;

/// One problem found while loading a project file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted field path such as `signal.modes[2]`; `$` is the document root.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Invalid(Vec<ConfigIssue>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Invalid(issues) => {
                write!(f, "{} configuration error(s):", issues.len())?;
                for i in issues {
                    write!(f, "\n  {i}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ConfigError::Io { .. } => &[],
            ConfigError::Invalid(v) => v,
        }
    }
}

// ---------------------------------------------------------------------------
// Raw schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    state_dim: usize,
    input_dim: usize,
    modes: Vec<RawMode>,
    #[serde(default)]
    mu: Vec<RawMu>,
    alpha_lower: RawPower,
    alpha_upper: RawPower,
    gain: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    field: Vec<String>,
    lyapunov: String,
    lambda: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMu {
    from: usize,
    to: usize,
    mu: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    a: f64,
    p: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    #[serde(default)]
    stable: Vec<RawModeBound>,
    #[serde(default)]
    unstable: Vec<RawModeBound>,
    #[serde(default)]
    transitions: Vec<RawEdgeBound>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModeBound {
    mode: usize,
    rate: RateFunction,
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdgeBound {
    from: usize,
    to: usize,
    rate: RateFunction,
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertificate {
    rho: RateFunction,
    #[serde(default)]
    c1: f64,
    #[serde(default)]
    horizons: Option<Vec<f64>>,
    #[serde(default)]
    grid_step: Option<f64>,
    #[serde(default)]
    condition_s_max: Option<f64>,
    #[serde(default)]
    condition_points: Option<usize>,
    #[serde(default)]
    claimed_lhs: Option<Vec<RateTerm>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    inputs: Vec<String>,
    t_end: f64,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default)]
    initial_box: Option<RawBox>,
    #[serde(default)]
    x0: Option<Vec<f64>>,
    #[serde(default)]
    n_runs: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    summary_only: bool,
    #[serde(default)]
    csv_stride: Option<usize>,
    #[serde(default)]
    cascade_check: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Inline,
    Csv,
    NoSwitch,
    WorstCase,
    Adt,
    Admissible,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalKind::Inline => "inline",
            SignalKind::Csv => "csv",
            SignalKind::NoSwitch => "no_switch",
            SignalKind::WorstCase => "worst_case",
            SignalKind::Adt => "adt",
            SignalKind::Admissible => "admissible",
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignal {
    kind: SignalKind,
    #[serde(default)]
    taus: Option<Vec<f64>>,
    #[serde(default)]
    modes: Option<Vec<usize>>,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    mode: Option<usize>,
    #[serde(default)]
    horizon: Option<f64>,
    #[serde(default)]
    mode_cycle: Option<Vec<usize>>,
    #[serde(default)]
    extra_switches: Option<usize>,
    #[serde(default)]
    tau_a: Option<f64>,
    #[serde(default)]
    n0: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    grid_step: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    state_box: Option<RawBox>,
    #[serde(default)]
    input_box: Option<RawBox>,
    #[serde(default)]
    gain_r_max: Option<f64>,
    #[serde(default)]
    gain_points: Option<usize>,
}

// ---------------------------------------------------------------------------
// Validated configuration

pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CertificateSettings {
    pub rho: RateFunction,
    pub c1: f64,
    /// Explicit horizons; when absent they are spread over the signal horizon.
    pub horizons: Option<Vec<f64>>,
    /// Step of the interval grid used by the signal-bound checks.
    pub grid_step: f64,
    pub condition_s_max: f64,
    pub condition_points: usize,
    /// A stated value of the weighted rate combination to compare against
    /// the recomputed one, as `(coef, power)` pairs.
    pub claimed_lhs: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct SimulationSettings {
    pub input: InputSignal,
    pub t_end: f64,
    pub dt: f64,
    pub initial_box: SampleBox,
    pub n_runs: usize,
    pub seed: u64,
    pub summary_only: bool,
    pub csv_stride: usize,
    pub cascade_check: bool,
}

#[derive(Debug, Clone)]
pub struct CheckSettings {
    pub samples: usize,
    pub seed: u64,
    pub state_box: SampleBox,
    pub input_box: SampleBox,
    pub gain_r_max: f64,
    pub gain_points: usize,
}

/// Where the switching signal comes from.
#[derive(Debug, Clone)]
pub enum SignalSource {
    /// Given inline, read from CSV, or a single mode.
    Fixed { kind: SignalKind, signal: SwitchingSignal, horizon: Option<f64> },
    WorstCase(WorstCaseOptions),
    Adt(AdtOptions),
    Admissible(AdmissibleOptions),
}

impl SignalSource {
    pub fn kind(&self) -> SignalKind {
        match self {
            SignalSource::Fixed { kind, .. } => *kind,
            SignalSource::WorstCase(_) => SignalKind::WorstCase,
            SignalSource::Adt(_) => SignalKind::Adt,
            SignalSource::Admissible(_) => SignalKind::Admissible,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectConfig {
    pub name: String,
    pub family: SwitchedFamily,
    pub bounds: Option<RateBoundSet>,
    pub certificate: Option<CertificateSettings>,
    pub simulation: Option<SimulationSettings>,
    pub signal: Option<SignalSource>,
    pub checks: CheckSettings,
}

impl ProjectConfig {
    /// Length of time over which the signal is generated and checked.
    pub fn signal_horizon(&self) -> f64 {
        match &self.signal {
            Some(SignalSource::WorstCase(o)) => o.horizon,
            Some(SignalSource::Adt(o)) => o.horizon,
            Some(SignalSource::Admissible(o)) => o.horizon,
            Some(SignalSource::Fixed { signal, horizon, .. }) => horizon
                .or(self.simulation.as_ref().map(|s| s.t_end))
                .unwrap_or_else(|| signal.taus().last().copied().unwrap_or(0.0) + 10.0),
            None => self.simulation.as_ref().map_or(10.0, |s| s.t_end),
        }
    }

    pub fn grid_step(&self) -> f64 {
        match &self.signal {
            Some(SignalSource::WorstCase(o)) => o.grid_step,
            Some(SignalSource::Adt(o)) => o.grid_step,
            Some(SignalSource::Admissible(o)) => o.grid_step,
            _ => self.certificate.as_ref().map_or(DEFAULT_GRID_STEP, |c| c.grid_step),
        }
    }

    /// Produces the switching signal, running the generator if one is
    /// configured.
    pub fn resolve_signal(&self) -> Result<SwitchingSignal, SignalError> {
        let edges = self.family.edges();
        let need_bounds = || {
            self.bounds
                .as_ref()
                .ok_or_else(|| SignalError::InvalidParameter("this generator needs a bounds block".into()))
        };
        match self.signal.as_ref() {
            None => Err(SignalError::InvalidParameter("no signal block".into())),
            Some(SignalSource::Fixed { signal, .. }) => Ok(signal.clone()),
            Some(SignalSource::WorstCase(o)) => generate_worst_case_signal(need_bounds()?, &edges, o),
            Some(SignalSource::Admissible(o)) => generate_admissible_signal(need_bounds()?, &edges, o),
            Some(SignalSource::Adt(o)) => generate_adt_signal(&edges, o),
        }
    }

    /// Horizons for summability and `ψ̄₂`: the configured list, or 200
    /// evenly spaced points over the signal horizon.
    pub fn horizons(&self) -> Vec<f64> {
        if let Some(h) = self.certificate.as_ref().and_then(|c| c.horizons.clone()) {
            return h;
        }
        let t = self.signal_horizon().max(1e-3);
        (1..=200).map(|k| t * k as f64 / 200.0).collect()
    }
}

// ---------------------------------------------------------------------------
// Loading

const TOP_LEVEL: [&str; 7] = ["name", "family", "bounds", "certificate", "simulation", "signal", "checks"];

/// Reads and validates a project file. Relative CSV paths resolve against
/// the file's directory.
pub fn load_config(path: &Path) -> Result<ProjectConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

/// Validates a project document held in memory.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ProjectConfig, ConfigError> {
    let mut v = Validator::default();
    let doc: Value = match serde_json::from_str(text) {
        Ok(d) => d,
        Err(e) => {
            v.issue("$", format!("not a JSON document: {e}"));
            return Err(ConfigError::Invalid(v.issues));
        }
    };
    let Value::Object(map) = doc else {
        v.issue("$", "expected a JSON object at the top level");
        return Err(ConfigError::Invalid(v.issues));
    };
    for key in map.keys() {
        if !TOP_LEVEL.contains(&key.as_str()) {
            v.issue(key, format!("unknown block (expected one of {})", TOP_LEVEL.join(", ")));
        }
    }
    let name = match map.get("name") {
        None => "unnamed".to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            v.issue("name", "expected a string");
            String::new()
        }
    };

    let raw_family: Option<RawFamily> = v.block(&map, "family", true);
    let raw_bounds: Option<RawBounds> = v.block(&map, "bounds", false);
    let raw_cert: Option<RawCertificate> = v.block(&map, "certificate", false);
    let raw_sim: Option<RawSimulation> = v.block(&map, "simulation", false);
    let raw_signal: Option<RawSignal> = v.block(&map, "signal", false);
    let raw_checks: Option<RawChecks> = v.block(&map, "checks", false);

    let Some(family) = raw_family.and_then(|f| v.family(f)) else {
        // Everything else refers to the family; report what we have.
        if let Some(c) = raw_cert {
            v.certificate(c);
        }
        return Err(ConfigError::Invalid(v.issues));
    };

    let bounds = raw_bounds.and_then(|b| v.bounds(b, &family));
    let certificate = raw_cert.and_then(|c| v.certificate(c));
    let simulation = raw_sim.and_then(|s| v.simulation(s, &family));
    let sim_t_end = simulation.as_ref().map(|s| s.t_end);
    let grid_default = certificate.as_ref().map_or(DEFAULT_GRID_STEP, |c| c.grid_step);
    let signal = raw_signal.and_then(|s| v.signal(s, &family, sim_t_end, grid_default, base_dir));
    let checks = v.checks(raw_checks.unwrap_or_default(), &family);

    if let (Some(SignalSource::WorstCase(_) | SignalSource::Admissible(_)), None) = (&signal, &bounds) {
        v.issue("signal.kind", "worst_case and admissible generators need a bounds block");
    }

    let Some(checks) = checks.filter(|_| v.issues.is_empty()) else {
        return Err(ConfigError::Invalid(v.issues));
    };
    Ok(ProjectConfig {
        name,
        family,
        bounds,
        certificate,
        simulation,
        signal,
        checks,
    })
}

#[derive(Default)]
struct Validator {
    issues: Vec<ConfigIssue>,
}

fn join(prefix: &str, inner: &str) -> String {
    if inner.is_empty() || inner == "." {
        prefix.to_string()
    } else if inner.starts_with('[') {
        format!("{prefix}{inner}")
    } else {
        format!("{prefix}.{inner}")
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl Validator {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn block<T: DeserializeOwned>(
        &mut self,
        map: &serde_json::Map<String, Value>,
        key: &str,
        required: bool,
    ) -> Option<T> {
        let Some(value) = map.get(key) else {
            if required {
                self.issue(key, "required block is missing");
            }
            return None;
        };
        match serde_path_to_error::deserialize::<_, T>(value.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                let path = join(key, &e.path().to_string());
                self.issue(path, e.into_inner().to_string());
                None
            }
        }
    }

    fn parse_expr(&mut self, path: String, text: &str, allowed: &[&str]) -> Option<Expr> {
        match Expr::parse(text, allowed) {
            Ok(e) => Some(e),
            Err(e) => {
                self.issue(path, e.to_string());
                None
            }
        }
    }

    fn power(&mut self, path: &str, p: &RawPower) -> Option<PowerBound> {
        if positive(p.a) && positive(p.p) {
            Some(PowerBound::new(p.a, p.p))
        } else {
            self.issue(path, format!("need a > 0 and p > 0 (got a={}, p={})", p.a, p.p));
            None
        }
    }

    fn family(&mut self, raw: RawFamily) -> Option<SwitchedFamily> {
        let before = self.issues.len();
        let (d, m) = (raw.state_dim, raw.input_dim);
        if d == 0 {
            self.issue("family.state_dim", "must be >= 1");
        }
        if raw.modes.is_empty() {
            self.issue("family.modes", "at least one mode is required");
        }
        let names = state_input_vars(d, m);
        let order: Vec<&str> = names.iter().map(String::as_str).collect();
        let n = raw.modes.len();
        let mut specs = Vec::with_capacity(n);
        for (i, mode) in raw.modes.iter().enumerate() {
            let base = format!("family.modes[{i}]");
            if mode.field.len() != d {
                self.issue(
                    format!("{base}.field"),
                    format!("has {} components, state_dim is {d}", mode.field.len()),
                );
            }
            let field: Vec<Option<Expr>> = mode
                .field
                .iter()
                .enumerate()
                .map(|(c, t)| self.parse_expr(format!("{base}.field[{c}]"), t, &order))
                .collect();
            let lyapunov = self.parse_expr(format!("{base}.lyapunov"), &mode.lyapunov, &order[..d]);
            if !mode.lambda.is_finite() || mode.lambda == 0.0 {
                self.issue(format!("{base}.lambda"), format!("must be finite and nonzero (got {})", mode.lambda));
            }
            if let (Some(field), Some(lyapunov)) = (field.into_iter().collect::<Option<Vec<_>>>(), lyapunov) {
                specs.push(SubsystemSpec {
                    field,
                    lyapunov,
                    lambda: mode.lambda,
                });
            }
        }
        let mut mu = BTreeMap::new();
        for (k, e) in raw.mu.iter().enumerate() {
            let path = format!("family.mu[{k}]");
            if e.from == e.to {
                self.issue(&path, format!("self-transition {}->{} is not allowed", e.from, e.to));
            } else if e.from == 0 || e.to == 0 || e.from > n || e.to > n {
                self.issue(&path, format!("transition {}->{} refers to a mode outside 1..={n}", e.from, e.to));
            } else if !positive(e.mu) {
                self.issue(format!("{path}.mu"), format!("must be > 0 (got {})", e.mu));
            } else if mu.insert((e.from, e.to), e.mu).is_some() {
                self.issue(&path, format!("transition {}->{} declared twice", e.from, e.to));
            }
        }
        let lo = self.power("family.alpha_lower", &raw.alpha_lower);
        let hi = self.power("family.alpha_upper", &raw.alpha_upper);
        let gain = self.parse_expr("family.gain".into(), &raw.gain, &["r"]);
        if self.issues.len() > before {
            return None;
        }
        match SwitchedFamily::new(d, m, specs, mu, lo?, hi?, gain?) {
            Ok(f) => Some(f),
            Err(e) => {
                self.issue("family", e.to_string());
                None
            }
        }
    }

    fn mode_bound(&mut self, path: &str, rate: RateFunction, offset: f64) -> Option<ModeBound> {
        let mut ok = true;
        if !positive(offset) {
            self.issue(format!("{path}.offset"), format!("must be > 0 (got {offset})"));
            ok = false;
        }
        if !rate.is_class_fk_infinity() {
            self.issue(
                format!("{path}.rate"),
                "must vanish at s = 0 and have a positive coefficient",
            );
            ok = false;
        }
        ok.then(|| ModeBound::new(rate, offset))
    }

    fn bounds(&mut self, raw: RawBounds, fam: &SwitchedFamily) -> Option<RateBoundSet> {
        let before = self.issues.len();
        let p = fam.partition_modes();
        let mut stable = BTreeMap::new();
        let mut unstable = BTreeMap::new();
        let mut transitions = BTreeMap::new();
        for (i, b) in raw.stable.into_iter().enumerate() {
            let path = format!("bounds.stable[{i}]");
            if !fam.has_mode(b.mode) {
                self.issue(format!("{path}.mode"), format!("mode {} is not a mode of the family", b.mode));
            } else if !p.stable.contains(&b.mode) {
                self.issue(format!("{path}.mode"), format!("mode {} is unstable (lambda < 0)", b.mode));
            } else if let Some(mb) = self.mode_bound(&path, b.rate, b.offset) {
                if stable.insert(b.mode, mb).is_some() {
                    self.issue(format!("{path}.mode"), format!("mode {} bounded twice", b.mode));
                }
            }
        }
        for (i, b) in raw.unstable.into_iter().enumerate() {
            let path = format!("bounds.unstable[{i}]");
            if !fam.has_mode(b.mode) {
                self.issue(format!("{path}.mode"), format!("mode {} is not a mode of the family", b.mode));
            } else if !p.unstable.contains(&b.mode) {
                self.issue(format!("{path}.mode"), format!("mode {} is stable (lambda > 0)", b.mode));
            } else if let Some(mb) = self.mode_bound(&path, b.rate, b.offset) {
                if unstable.insert(b.mode, mb).is_some() {
                    self.issue(format!("{path}.mode"), format!("mode {} bounded twice", b.mode));
                }
            }
        }
        for (i, b) in raw.transitions.into_iter().enumerate() {
            let path = format!("bounds.transitions[{i}]");
            let edge = (b.from, b.to);
            if !fam.is_admissible(edge) {
                self.issue(&path, format!("transition {}->{} is not declared in family.mu", b.from, b.to));
            } else if let Some(mb) = self.mode_bound(&path, b.rate, b.offset) {
                if transitions.insert(edge, mb).is_some() {
                    self.issue(&path, format!("transition {}->{} bounded twice", b.from, b.to));
                }
            }
        }
        for m in p.stable.difference(&stable.keys().copied().collect()) {
            self.issue("bounds.stable", format!("missing bound for stable mode {m}"));
        }
        for m in p.unstable.difference(&unstable.keys().copied().collect()) {
            self.issue("bounds.unstable", format!("missing bound for unstable mode {m}"));
        }
        let have: BTreeSet<Edge> = transitions.keys().copied().collect();
        for e in fam.edges().difference(&have) {
            self.issue("bounds.transitions", format!("missing bound for transition {}->{}", e.0, e.1));
        }
        if self.issues.len() > before {
            return None;
        }
        match RateBoundSet::new(stable, unstable, transitions) {
            Ok(b) => Some(b),
            Err(e) => {
                self.issue("bounds", e.to_string());
                None
            }
        }
    }

    fn certificate(&mut self, raw: RawCertificate) -> Option<CertificateSettings> {
        let before = self.issues.len();
        if raw.rho.offset() != 0.0 {
            self.issue("certificate.rho.offset", "the certificate rate must vanish at s = 0");
        }
        if !raw.rho.is_strictly_increasing() {
            self.issue("certificate.rho.terms", "need at least one positive coefficient");
        }
        if !raw.c1.is_finite() {
            self.issue("certificate.c1", "must be finite");
        }
        if let Some(h) = &raw.horizons {
            if h.is_empty() {
                self.issue("certificate.horizons", "must not be empty");
            }
            for (i, &t) in h.iter().enumerate() {
                if !positive(t) {
                    self.issue(format!("certificate.horizons[{i}]"), format!("must be > 0 (got {t})"));
                }
            }
        }
        let grid_step = raw.grid_step.unwrap_or(DEFAULT_GRID_STEP);
        if !positive(grid_step) {
            self.issue("certificate.grid_step", format!("must be > 0 (got {grid_step})"));
        }
        let s_max = raw.condition_s_max.unwrap_or(100.0);
        if !positive(s_max) {
            self.issue("certificate.condition_s_max", format!("must be > 0 (got {s_max})"));
        }
        let points = raw.condition_points.unwrap_or(500);
        if points == 0 {
            self.issue("certificate.condition_points", "must be >= 1");
        }
        let claimed = raw.claimed_lhs.map(|terms| {
            for (i, t) in terms.iter().enumerate() {
                if !(t.coef.is_finite() && positive(t.power)) {
                    self.issue(format!("certificate.claimed_lhs[{i}]"), "need a finite coef and power > 0");
                }
            }
            terms.iter().map(|t| (t.coef, t.power)).collect()
        });
        (self.issues.len() == before).then_some(CertificateSettings {
            rho: raw.rho,
            c1: raw.c1,
            horizons: raw.horizons,
            grid_step,
            condition_s_max: s_max,
            condition_points: points,
            claimed_lhs: claimed,
        })
    }

    fn sample_box(&mut self, path: &str, raw: &RawBox, dim: usize) -> Option<SampleBox> {
        if raw.lower.len() != dim || raw.upper.len() != dim {
            self.issue(
                path,
                format!("needs {dim} lower and upper values (got {} and {})", raw.lower.len(), raw.upper.len()),
            );
            return None;
        }
        match SampleBox::new(raw.lower.clone(), raw.upper.clone()) {
            Ok(b) => Some(b),
            Err(e) => {
                self.issue(path, e.to_string());
                None
            }
        }
    }

    fn simulation(&mut self, raw: RawSimulation, fam: &SwitchedFamily) -> Option<SimulationSettings> {
        let before = self.issues.len();
        let (d, m) = (fam.state_dim(), fam.input_dim());
        if raw.inputs.len() != m {
            self.issue(
                "simulation.inputs",
                format!("has {} expressions, input_dim is {m}", raw.inputs.len()),
            );
        }
        let exprs: Vec<Option<Expr>> = raw
            .inputs
            .iter()
            .enumerate()
            .map(|(i, t)| self.parse_expr(format!("simulation.inputs[{i}]"), t, &["t"]))
            .collect();
        if !positive(raw.t_end) {
            self.issue("simulation.t_end", format!("must be > 0 (got {})", raw.t_end));
        }
        let dt = raw.dt.unwrap_or(DEFAULT_DT);
        if !positive(dt) {
            self.issue("simulation.dt", format!("must be > 0 (got {dt})"));
        }
        let initial_box = match (&raw.x0, &raw.initial_box) {
            (Some(x0), _) => {
                if x0.len() != d || x0.iter().any(|x| !x.is_finite()) {
                    self.issue("simulation.x0", format!("needs {d} finite values"));
                    None
                } else {
                    SampleBox::new(x0.clone(), x0.clone()).ok()
                }
            }
            (None, Some(b)) => self.sample_box("simulation.initial_box", b, d),
            (None, None) => {
                self.issue("simulation", "give either x0 or initial_box");
                None
            }
        };
        let n_runs = raw.n_runs.unwrap_or(1);
        if n_runs == 0 {
            self.issue("simulation.n_runs", "must be >= 1");
        }
        let csv_stride = raw.csv_stride.unwrap_or(1);
        if csv_stride == 0 {
            self.issue("simulation.csv_stride", "must be >= 1");
        }
        if self.issues.len() > before {
            return None;
        }
        let input = match InputSignal::new(exprs.into_iter().collect::<Option<Vec<_>>>()?) {
            Ok(i) => i,
            Err(e) => {
                self.issue("simulation.inputs", e.to_string());
                return None;
            }
        };
        Some(SimulationSettings {
            input,
            t_end: raw.t_end,
            dt,
            initial_box: initial_box?,
            n_runs,
            seed: raw.seed,
            summary_only: raw.summary_only,
            csv_stride,
            cascade_check: raw.cascade_check.unwrap_or(true),
        })
    }

    /// Checks that `modes` names existing modes joined by admissible
    /// transitions; `path` is the list's field path.
    fn mode_list(&mut self, path: &str, modes: &[usize], fam: &SwitchedFamily, closed: bool) {
        let n = fam.num_modes();
        for (i, &mode) in modes.iter().enumerate() {
            if !fam.has_mode(mode) {
                self.issue(format!("{path}[{i}]"), format!("mode {mode} is not a mode of the family (1..={n})"));
            }
        }
        let links = if closed && modes.len() > 1 { modes.len() } else { modes.len().saturating_sub(1) };
        for k in 0..links {
            let (a, b) = (modes[k], modes[(k + 1) % modes.len()]);
            if fam.has_mode(a) && fam.has_mode(b) && !fam.is_admissible((a, b)) {
                self.issue(
                    format!("{path}[{}]", (k + 1) % modes.len()),
                    format!("transition {a}->{b} is not declared in family.mu"),
                );
            }
        }
    }

    fn signal(
        &mut self,
        raw: RawSignal,
        fam: &SwitchedFamily,
        sim_t_end: Option<f64>,
        grid_default: f64,
        base_dir: &Path,
    ) -> Option<SignalSource> {
        let before = self.issues.len();
        let grid_step = raw.grid_step.unwrap_or(grid_default);
        if !positive(grid_step) {
            self.issue("signal.grid_step", format!("must be > 0 (got {grid_step})"));
        }
        if let Some(h) = raw.horizon {
            if !positive(h) {
                self.issue("signal.horizon", format!("must be > 0 (got {h})"));
            }
        }
        let horizon = raw.horizon.or(sim_t_end);
        let kind = raw.kind;
        let require_horizon = |v: &mut Self| {
            if horizon.is_none() {
                v.issue("signal.horizon", format!("required for kind {kind} without a simulation block"));
            }
            horizon.unwrap_or(0.0)
        };
        let need_cycle = |v: &mut Self| match &raw.mode_cycle {
            Some(c) if !c.is_empty() => {
                v.mode_list("signal.mode_cycle", c, fam, true);
                c.clone()
            }
            _ => {
                v.issue("signal.mode_cycle", format!("required for kind {kind}"));
                Vec::new()
            }
        };
        let source = match kind {
            SignalKind::Inline => {
                let (Some(taus), Some(modes)) = (&raw.taus, &raw.modes) else {
                    self.issue("signal", "kind inline needs taus and modes");
                    return None;
                };
                self.mode_list("signal.modes", modes, fam, false);
                if self.issues.len() > before {
                    return None;
                }
                match SwitchingSignal::new(taus.clone(), modes.clone()) {
                    Ok(signal) => SignalSource::Fixed { kind, signal, horizon },
                    Err(e) => {
                        self.issue("signal", e.to_string());
                        return None;
                    }
                }
            }
            SignalKind::Csv => {
                let Some(p) = &raw.path else {
                    self.issue("signal.path", "required for kind csv");
                    return None;
                };
                let full = base_dir.join(p);
                let read = fs::File::open(&full)
                    .map_err(|e| e.to_string())
                    .and_then(|f| read_signal_csv(f).map_err(|e| e.to_string()));
                match read {
                    Ok(signal) => {
                        self.mode_list(&format!("signal.path({p}).modes"), signal.modes(), fam, false);
                        SignalSource::Fixed { kind, signal, horizon }
                    }
                    Err(e) => {
                        self.issue("signal.path", format!("{}: {e}", full.display()));
                        return None;
                    }
                }
            }
            SignalKind::NoSwitch => {
                let mode = raw.mode.unwrap_or(1);
                if !fam.has_mode(mode) {
                    self.issue("signal.mode", format!("mode {mode} is not a mode of the family"));
                }
                SignalSource::Fixed {
                    kind,
                    signal: SwitchingSignal::constant(mode),
                    horizon,
                }
            }
            SignalKind::WorstCase => SignalSource::WorstCase(WorstCaseOptions {
                horizon: require_horizon(self),
                mode_cycle: need_cycle(self),
                extra_switches: raw.extra_switches,
                grid_step,
            }),
            SignalKind::Admissible => SignalSource::Admissible(AdmissibleOptions {
                horizon: require_horizon(self),
                grid_step,
                mode_cycle: need_cycle(self),
            }),
            SignalKind::Adt => {
                let tau_a = raw.tau_a.unwrap_or(f64::NAN);
                let n0 = raw.n0.unwrap_or(f64::NAN);
                if !positive(tau_a) {
                    self.issue("signal.tau_a", "required for kind adt and must be > 0");
                }
                if !(n0.is_finite() && n0 >= 0.0) {
                    self.issue("signal.n0", "required for kind adt and must be >= 0");
                }
                SignalSource::Adt(AdtOptions {
                    tau_a,
                    n0,
                    horizon: require_horizon(self),
                    mode_cycle: need_cycle(self),
                    seed: raw.seed,
                    grid_step,
                })
            }
        };
        (self.issues.len() == before).then_some(source)
    }

    fn checks(&mut self, raw: RawChecks, fam: &SwitchedFamily) -> Option<CheckSettings> {
        let (d, m) = (fam.state_dim(), fam.input_dim());
        let state_box = match &raw.state_box {
            Some(b) => self.sample_box("checks.state_box", b, d),
            None => SampleBox::cube(d, -10.0, 10.0).ok(),
        };
        let input_box = match &raw.input_box {
            Some(b) => self.sample_box("checks.input_box", b, m),
            None => SampleBox::cube(m, -1.0, 1.0).ok(),
        };
        let samples = raw.samples.unwrap_or(2000);
        if samples == 0 {
            self.issue("checks.samples", "must be >= 1");
        }
        let gain_r_max = raw.gain_r_max.unwrap_or(100.0);
        if !positive(gain_r_max) {
            self.issue("checks.gain_r_max", "must be > 0");
        }
        Some(CheckSettings {
            samples,
            seed: raw.seed.unwrap_or(1),
            state_box: state_box?,
            input_box: input_box?,
            gain_r_max,
            gain_points: raw.gain_points.unwrap_or(1000).max(2),
        })
    }
}
