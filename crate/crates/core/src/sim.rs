//! Switch-aligned RK4 integration, seeded batches, and the trajectory-side
//! checks of the certified envelope and the Lyapunov cascade bound.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::certificate::{compute_psi1, compute_psi2, IssCertificate};
use crate::expr::{CompiledExpr, DomainError, Expr, ExprError};
use crate::family::{norm, Edge, SampleBox, SwitchedFamily};
use crate::signal::{SignalError, SwitchingSignal};

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Relative tolerance of the envelope and cascade comparisons.
pub const TRAJECTORY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation parameter: {0}")]
    Parameter(String),
    #[error("input expression: {0}")]
    Input(#[from] ExprError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Exogenous input `v(t)` given as one expression in `t` per component.
#[derive(Debug, Clone)]
pub struct InputSignal {
    exprs: Vec<Expr>,
    compiled: Vec<CompiledExpr>,
}

impl InputSignal {
    pub fn new(exprs: Vec<Expr>) -> Result<Self, SimError> {
        let compiled = exprs
            .iter()
            .map(|e| e.compile(&["t"]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InputSignal { exprs, compiled })
    }

    pub fn parse(texts: &[&str]) -> Result<Self, SimError> {
        Self::new(
            texts
                .iter()
                .map(|t| Expr::parse(t, &["t"]))
                .collect::<Result<Vec<_>, _>>()?,
        )
    }

    /// Zero input of dimension `m`.
    pub fn zero(m: usize) -> Self {
        Self::new(vec![Expr::Const(0.0); m]).expect("constants compile")
    }

    pub fn dim(&self) -> usize {
        self.exprs.len()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    #[inline]
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), DomainError> {
        for (o, c) in out.iter_mut().zip(&self.compiled) {
            *o = c.eval(&[t])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { time: f64 },
    DomainError { time: f64, error: DomainError },
}

/// Sampled solution on a grid that contains every switching instant.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state_dim: usize,
    pub input_dim: usize,
    pub times: Vec<f64>,
    /// Mode `σ(t_k)` at each grid point (right-continuous).
    pub modes: Vec<usize>,
    states: Vec<f64>,
    inputs: Vec<f64>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn initial_state(&self) -> &[f64] {
        self.state(0)
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn diverged(&self) -> bool {
        !matches!(self.status, RunStatus::Completed)
    }

    /// Largest sampled `‖v(t_k)‖`.
    pub fn input_sup(&self) -> f64 {
        (0..self.len()).map(|k| norm(self.input(k))).fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.len()).map(|k| norm(self.state(k))).fold(0.0, f64::max)
    }

    /// Writes `t,mode,x1..xd,v1..vm,normx`, one row per grid point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        self.write_csv_strided(w, 1)
    }

    /// Like [`Trajectory::write_csv`] but keeps every `stride`-th row plus
    /// the last one.
    pub fn write_csv_strided<W: Write>(&self, w: W, stride: usize) -> Result<(), SimError> {
        let err = |e: csv::Error| SimError::Csv(e.to_string());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "mode".to_string()];
        header.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        header.extend((1..=self.input_dim).map(|i| format!("v{i}")));
        header.push("normx".into());
        wr.write_record(&header).map_err(err)?;
        let stride = stride.max(1);
        for k in 0..self.len() {
            if k % stride != 0 && k + 1 != self.len() {
                continue;
            }
            let mut row = vec![self.times[k].to_string(), self.modes[k].to_string()];
            row.extend(self.state(k).iter().map(f64::to_string));
            row.extend(self.input(k).iter().map(f64::to_string));
            row.push(norm(self.state(k)).to_string());
            wr.write_record(&row).map_err(err)?;
        }
        wr.flush().map_err(|e| SimError::Csv(e.to_string()))
    }
}

/// Classical RK4 with fixed step `dt`, shortened so that every switching
/// instant is a grid point. The field of `modes[i]` is used on `]τᵢ, τᵢ₊₁]`.
pub fn integrate(
    fam: &SwitchedFamily,
    sig: &SwitchingSignal,
    input: &InputSignal,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, SimError> {
    let d = fam.state_dim();
    let m = fam.input_dim();
    if !(dt > 0.0 && dt.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(SimError::Parameter(format!("need dt > 0 and t_end > 0 (got dt={dt}, t_end={t_end})")));
    }
    if x0.len() != d {
        return Err(SimError::Parameter(format!("x0 has dimension {}, state dimension is {d}", x0.len())));
    }
    if input.dim() != m {
        return Err(SimError::Parameter(format!("input has {} components, family expects {m}", input.dim())));
    }
    sig.validate_against(fam)?;

    let mut breaks: Vec<f64> = vec![0.0];
    breaks.extend(sig.taus()[1..].iter().copied().filter(|&t| t < t_end));
    breaks.push(t_end);
    let est = (t_end / dt).ceil() as usize + breaks.len() + 1;

    let mut traj = Trajectory {
        state_dim: d,
        input_dim: m,
        times: Vec::with_capacity(est),
        modes: Vec::with_capacity(est),
        states: Vec::with_capacity(est * d),
        inputs: Vec::with_capacity(est * m),
        status: RunStatus::Completed,
    };
    let mut v = vec![0.0; m];
    if let Err(error) = input.eval_into(0.0, &mut v) {
        traj.status = RunStatus::DomainError { time: 0.0, error };
        return Ok(traj);
    }
    traj.times.push(0.0);
    traj.modes.push(sig.mode_at(0.0));
    traj.states.extend_from_slice(x0);
    traj.inputs.extend_from_slice(&v);

    let mut x = x0.to_vec();
    let mut rk = Rk4Work::new(d, m);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let sub = fam.subsystem(sig.mode_before(b)).expect("validated signal");
        let n = ((b - a) / dt - 1e-9).ceil().max(1.0) as usize;
        for k in 0..n {
            let t0 = a + k as f64 * dt;
            let t1 = if k + 1 == n { b } else { a + (k + 1) as f64 * dt };
            if let Err(error) = rk.step(sub, input, t0, t1 - t0, &mut x) {
                traj.status = RunStatus::DomainError { time: t0, error };
                return Ok(traj);
            }
            if let Err(error) = input.eval_into(t1, &mut v) {
                traj.status = RunStatus::DomainError { time: t1, error };
                return Ok(traj);
            }
            traj.times.push(t1);
            traj.modes.push(sig.mode_at(t1));
            traj.states.extend_from_slice(&x);
            traj.inputs.extend_from_slice(&v);
            let nx = norm(&x);
            if !(nx <= DIVERGENCE_THRESHOLD) {
                traj.status = RunStatus::Diverged { time: t1 };
                return Ok(traj);
            }
        }
    }
    Ok(traj)
}

struct Rk4Work {
    d: usize,
    slots: Vec<f64>,
    k: [Vec<f64>; 4],
}

impl Rk4Work {
    fn new(d: usize, m: usize) -> Self {
        Rk4Work {
            d,
            slots: vec![0.0; d + m],
            k: [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]],
        }
    }

    fn deriv(
        &mut self,
        sub: &crate::family::Subsystem,
        input: &InputSignal,
        t: f64,
        x: &[f64],
        scale: f64,
        from: Option<usize>,
        into: usize,
    ) -> Result<(), DomainError> {
        let d = self.d;
        for i in 0..d {
            self.slots[i] = x[i] + from.map_or(0.0, |f| scale * self.k[f][i]);
        }
        input.eval_into(t, &mut self.slots[d..])?;
        let (slots, k) = (&self.slots, &mut self.k);
        sub.field_into(slots, &mut k[into])
    }

    fn step(
        &mut self,
        sub: &crate::family::Subsystem,
        input: &InputSignal,
        t: f64,
        h: f64,
        x: &mut [f64],
    ) -> Result<(), DomainError> {
        self.deriv(sub, input, t, x, 0.0, None, 0)?;
        self.deriv(sub, input, t + 0.5 * h, x, 0.5 * h, Some(0), 1)?;
        self.deriv(sub, input, t + 0.5 * h, x, 0.5 * h, Some(1), 2)?;
        self.deriv(sub, input, t + h, x, h, Some(2), 3)?;
        for i in 0..self.d {
            x[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Batches

/// SplitMix64 step; run `i` of a batch is seeded with the `(i+1)`-th output
/// of the stream started at the master seed.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_seed(master: u64, run: usize) -> u64 {
    splitmix64(master.wrapping_add((run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Initial state of run `run`, uniform on `bx`.
pub fn initial_state(bx: &SampleBox, master: u64, run: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(master, run));
    bx.lower
        .iter()
        .zip(&bx.upper)
        .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub initial_norm: f64,
    pub sup_norm: f64,
    pub final_norm: f64,
    pub status: RunStatus,
}

impl RunSummary {
    pub fn of(run: usize, seed: u64, traj: &Trajectory) -> Self {
        RunSummary {
            run,
            seed,
            x0: traj.initial_state().to_vec(),
            initial_norm: norm(traj.initial_state()),
            sup_norm: traj.sup_norm(),
            final_norm: norm(traj.final_state()),
            status: traj.status.clone(),
        }
    }

    pub fn diverged(&self) -> bool {
        !matches!(self.status, RunStatus::Completed)
    }
}

/// Common parameters of a batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchSpec<'a> {
    pub family: &'a SwitchedFamily,
    pub signal: &'a SwitchingSignal,
    pub input: &'a InputSignal,
    pub initial_box: &'a SampleBox,
    pub n_runs: usize,
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
}

/// Runs the batch in parallel and maps every trajectory through `f`;
/// results come back in run order.
pub fn batch_map<R, F>(spec: BatchSpec<'_>, f: F) -> Result<Vec<R>, SimError>
where
    R: Send,
    F: Fn(usize, &Trajectory) -> R + Sync,
{
    if spec.n_runs == 0 {
        return Err(SimError::Parameter("n_runs must be >= 1".into()));
    }
    if spec.initial_box.dim() != spec.family.state_dim() {
        return Err(SimError::Parameter(format!(
            "initial box has dimension {}, state dimension is {}",
            spec.initial_box.dim(),
            spec.family.state_dim()
        )));
    }
    (0..spec.n_runs)
        .into_par_iter()
        .map(|run| {
            let x0 = initial_state(spec.initial_box, spec.seed, run);
            let traj = integrate(spec.family, spec.signal, spec.input, &x0, spec.t_end, spec.dt)?;
            Ok(f(run, &traj))
        })
        .collect()
}

/// Per-run summaries of a seeded batch.
pub fn batch_simulate(spec: BatchSpec<'_>) -> Result<Vec<RunSummary>, SimError> {
    let seed = spec.seed;
    batch_map(spec, |run, traj| RunSummary::of(run, run_seed(seed, run), traj))
}

// ---------------------------------------------------------------------------
// Trajectory checks

#[derive(Debug, Clone, PartialEq)]
pub struct PointViolation {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub points: usize,
    pub violations: Vec<PointViolation>,
    /// Largest `lhs − rhs`.
    pub worst_margin: f64,
}

impl EnvelopeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `α(‖x(t_k)‖) ≤ β(‖x₀‖, t_k) + χ(v_sup)` at every grid point.
pub fn check_envelope(traj: &Trajectory, cert: &IssCertificate, v_sup: f64) -> EnvelopeReport {
    let r0 = norm(traj.initial_state());
    let chi = cert.chi(v_sup);
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..traj.len() {
        let t = traj.times[k];
        let lhs = cert.alpha(norm(traj.state(k)));
        let rhs = cert.beta(r0, t) + chi;
        worst = worst.max(lhs - rhs);
        if !(lhs <= rhs + TRAJECTORY_TOLERANCE * rhs.abs().max(1.0)) {
            violations.push(PointViolation { t, lhs, rhs });
        }
    }
    EnvelopeReport {
        points: traj.len(),
        violations,
        worst_margin: worst,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CascadeLabel {
    /// Lyapunov data passed the sampled checks on the trajectory's box.
    Verified { passed: bool },
    /// Some sampled check failed; margins are reported without a verdict.
    AssumptionUnverified { reasons: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeReport {
    pub label: CascadeLabel,
    pub points: usize,
    pub violations: Vec<PointViolation>,
    pub worst_margin: f64,
}

/// Compares `V_{σ(t_k)}(x(t_k))` against the cascade bound with
/// `γ(sup_{[0,t_k]} ‖v‖)`, after re-running the sampled Lyapunov checks on
/// the box spanned by the trajectory.
pub fn check_cascade(
    traj: &Trajectory,
    fam: &SwitchedFamily,
    sig: &SwitchingSignal,
    samples: usize,
    seed: u64,
) -> CascadeReport {
    let reasons = assumption_failures(traj, fam, sig, samples, seed);
    let x0 = traj.initial_state();
    let v0 = fam
        .subsystem(sig.initial_mode())
        .ok()
        .and_then(|s| s.lyapunov_value(x0).ok())
        .unwrap_or(f64::NAN);
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut v_run: f64 = 0.0;
    for k in 0..traj.len() {
        let t = traj.times[k];
        v_run = v_run.max(norm(traj.input(k)));
        let lhs = fam
            .subsystem(traj.modes[k])
            .ok()
            .and_then(|s| s.lyapunov_value(traj.state(k)).ok())
            .unwrap_or(f64::NAN);
        let g = fam.gain(v_run).unwrap_or(f64::NAN);
        let rhs = if t == 0.0 {
            v0
        } else {
            match (compute_psi1(fam, sig, t), compute_psi2(fam, sig, t)) {
                (Ok(p1), Ok(p2)) => p1 * v0 + g * p2,
                _ => f64::NAN,
            }
        };
        worst = worst.max(lhs - rhs);
        if !(lhs <= rhs + TRAJECTORY_TOLERANCE * rhs.abs().max(1.0)) {
            violations.push(PointViolation { t, lhs, rhs });
        }
    }
    let label = if reasons.is_empty() {
        CascadeLabel::Verified {
            passed: violations.is_empty(),
        }
    } else {
        CascadeLabel::AssumptionUnverified { reasons }
    };
    CascadeReport {
        label,
        points: traj.len(),
        violations,
        worst_margin: worst,
    }
}

fn assumption_failures(
    traj: &Trajectory,
    fam: &SwitchedFamily,
    sig: &SwitchingSignal,
    samples: usize,
    seed: u64,
) -> Vec<String> {
    let d = fam.state_dim();
    let m = fam.input_dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut ilo = vec![f64::INFINITY; m];
    let mut ihi = vec![f64::NEG_INFINITY; m];
    for k in 0..traj.len() {
        for (i, &x) in traj.state(k).iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
        for (i, &v) in traj.input(k).iter().enumerate() {
            ilo[i] = ilo[i].min(v);
            ihi[i] = ihi[i].max(v);
        }
    }
    let mut reasons = Vec::new();
    let (sbox, ibox) = match (SampleBox::new(lo, hi), SampleBox::new(ilo, ihi)) {
        (Ok(s), Ok(i)) => (s, i),
        _ => return vec!["trajectory does not span a finite box".into()],
    };
    let modes: BTreeSet<usize> = traj.modes.iter().copied().collect();
    for &mode in &modes {
        match fam.check_lyapunov_sandwich(mode, &sbox, samples, seed) {
            Ok(r) if r.passed() => {}
            Ok(r) => reasons.push(format!("{}: {} violations", r.check, r.violations.len())),
            Err(e) => reasons.push(e.to_string()),
        }
        match fam.check_lyapunov_decay(mode, &sbox, &ibox, samples, seed) {
            Ok(r) if r.passed() => {}
            Ok(r) => reasons.push(format!(
                "{}: {} violations, worst margin {:e}",
                r.check,
                r.violations.len(),
                r.worst_margin
            )),
            Err(e) => reasons.push(e.to_string()),
        }
    }
    // the visited states themselves; random samples of a wide box can miss
    // the small region a trajectory settles in
    let mut slots = vec![0.0; d + m];
    let mut along: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for k in 0..traj.len() {
        slots[..d].copy_from_slice(traj.state(k));
        slots[d..].copy_from_slice(traj.input(k));
        let mode = traj.modes[k];
        if let Ok(dm) = fam.decay_margin(mode, &slots) {
            if dm.margin > TRAJECTORY_TOLERANCE * (1.0 + dm.lhs.abs() + dm.bound.abs()) {
                let e = along.entry(mode).or_insert((0, f64::NEG_INFINITY));
                e.0 += 1;
                e.1 = e.1.max(dm.margin);
            }
        }
    }
    for (mode, (count, worst)) in along {
        reasons.push(format!(
            "decay mode {mode} along the trajectory: {count} violations, worst margin {worst:e}"
        ));
    }
    let edges: BTreeSet<Edge> = sig.transitions().collect();
    for e in edges {
        match fam.check_mu_compatibility(e, &sbox, samples, seed) {
            Ok(r) if r.pass => {}
            Ok(r) => reasons.push(format!("mu {}->{}: sampled ratio {} > {}", e.0, e.1, r.mu_hat, r.mu)),
            Err(err) => reasons.push(err.to_string()),
        }
    }
    reasons
}
