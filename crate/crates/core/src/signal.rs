//! Switching signals, their activation durations and switch counts, the
//! rate-bound checks on every interval, and three signal generators.
//!
//! Intervals are half-open `]s, t]` throughout. A signal holds `modes[i]`
//! on `]τᵢ, τᵢ₊₁]` and keeps its last mode forever.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{Edge, SwitchedFamily};
use crate::ratefn::{RateError, RateFunction};

/// Absolute tolerance for every interval inequality.
pub const BOUND_TOLERANCE: f64 = 1e-9;
/// Smallest holding time a generator may produce.
pub const MIN_HOLDING_TIME: f64 = 1e-9;
/// Width of the cluster that holds the extra switches of the worst-case
/// placement.
pub const EXTRA_SWITCH_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("signal must contain at least the initial instant")]
    Empty,
    #[error("tau and modes have different lengths ({taus} vs {modes})")]
    LengthMismatch { taus: usize, modes: usize },
    #[error("tau[0] must be 0 (got {0})")]
    NonZeroStart(f64),
    #[error("tau[{index}] = {value} is not finite or not strictly increasing")]
    NotIncreasing { index: usize, value: f64 },
    #[error("modes[{index}] repeats the previous mode {mode}")]
    RepeatedMode { index: usize, mode: usize },
    #[error("modes[{index}] = {mode} is not a mode of the family")]
    UnknownMode { index: usize, mode: usize },
    #[error("modes[{index}]: transition {from}->{to} is not admissible")]
    NotAdmissible { index: usize, from: usize, to: usize },
    #[error("interval must satisfy 0 <= s < t (got s={s}, t={t})")]
    Ordering { s: f64, t: f64 },
    #[error("invalid rate bound for {what}: {reason}")]
    InvalidBound { what: String, reason: String },
    #[error("bounds do not match the family: {0}")]
    BoundsMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mode cycle is incompatible with the admissible transitions: {0}")]
    IncompatibleCycle(String),
    #[error("generation infeasible: {0}")]
    Infeasible(String),
    #[error("rate function: {0}")]
    Rate(#[from] RateError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Finite switching signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    taus: Vec<f64>,
    modes: Vec<usize>,
}

impl SwitchingSignal {
    pub fn new(taus: Vec<f64>, modes: Vec<usize>) -> Result<Self, SignalError> {
        if taus.is_empty() || modes.is_empty() {
            return Err(SignalError::Empty);
        }
        if taus.len() != modes.len() {
            return Err(SignalError::LengthMismatch {
                taus: taus.len(),
                modes: modes.len(),
            });
        }
        if taus[0] != 0.0 {
            return Err(SignalError::NonZeroStart(taus[0]));
        }
        for i in 1..taus.len() {
            if !(taus[i].is_finite() && taus[i] > taus[i - 1]) {
                return Err(SignalError::NotIncreasing {
                    index: i,
                    value: taus[i],
                });
            }
            if modes[i] == modes[i - 1] {
                return Err(SignalError::RepeatedMode {
                    index: i,
                    mode: modes[i],
                });
            }
        }
        Ok(SwitchingSignal { taus, modes })
    }

    /// Signal that never switches.
    pub fn constant(mode: usize) -> Self {
        SwitchingSignal {
            taus: vec![0.0],
            modes: vec![mode],
        }
    }

    /// Switches every `gap` time units up to `horizon`, cycling through
    /// `mode_cycle`.
    pub fn equispaced(gap: f64, horizon: f64, mode_cycle: &[usize]) -> Result<Self, SignalError> {
        if !(gap > 0.0) || mode_cycle.is_empty() {
            return Err(SignalError::InvalidParameter("gap must be > 0 and the cycle nonempty".into()));
        }
        let mut taus = vec![0.0];
        let mut k = 1u64;
        while (k as f64) * gap <= horizon {
            taus.push(k as f64 * gap);
            k += 1;
        }
        let modes = (0..taus.len()).map(|i| mode_cycle[i % mode_cycle.len()]).collect();
        SwitchingSignal::new(taus, modes)
    }

    /// Checks that every mode exists in `fam` and every transition is
    /// admissible.
    pub fn validate_against(&self, fam: &SwitchedFamily) -> Result<(), SignalError> {
        for (i, &m) in self.modes.iter().enumerate() {
            if !fam.has_mode(m) {
                return Err(SignalError::UnknownMode { index: i, mode: m });
            }
            if i > 0 && !fam.is_admissible((self.modes[i - 1], m)) {
                return Err(SignalError::NotAdmissible {
                    index: i,
                    from: self.modes[i - 1],
                    to: m,
                });
            }
        }
        Ok(())
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn initial_mode(&self) -> usize {
        self.modes[0]
    }

    pub fn num_switches(&self) -> usize {
        self.taus.len() - 1
    }

    /// Number of switches in `]0, t]`.
    pub fn switches_up_to(&self, t: f64) -> usize {
        self.taus.partition_point(|&tau| tau <= t) - 1
    }

    /// `σ(t)`, right-continuous.
    pub fn mode_at(&self, t: f64) -> usize {
        self.modes[self.switches_up_to(t.max(0.0))]
    }

    /// Mode active on a left neighbourhood of `t > 0`, i.e. on the interval
    /// `]τᵢ, τᵢ₊₁]` containing `t`.
    pub fn mode_before(&self, t: f64) -> usize {
        let i = self.taus.partition_point(|&tau| tau < t);
        self.modes[i.saturating_sub(1)]
    }

    /// Holding times `τᵢ₊₁ − τᵢ`.
    pub fn holding_times(&self) -> Vec<f64> {
        self.taus.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Measure of `{u ∈ ]s, t] : mode active}`.
    pub fn activation_duration(&self, mode: usize, s: f64, t: f64) -> Result<f64, SignalError> {
        check_order(s, t)?;
        let mut total = 0.0;
        for i in 0..self.taus.len() {
            if self.modes[i] != mode {
                continue;
            }
            let a = self.taus[i].max(s);
            let b = self.taus.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
            if b > a {
                total += b - a;
            }
        }
        Ok(total)
    }

    /// Number of `from → to` switches at instants in `]s, t]`.
    pub fn switch_count(&self, edge: Edge, s: f64, t: f64) -> Result<usize, SignalError> {
        check_order(s, t)?;
        Ok((1..self.taus.len())
            .filter(|&i| {
                self.taus[i] > s
                    && self.taus[i] <= t
                    && self.modes[i - 1] == edge.0
                    && self.modes[i] == edge.1
            })
            .count())
    }

    /// All switches at instants in `]s, t]`.
    pub fn total_switches(&self, s: f64, t: f64) -> Result<usize, SignalError> {
        check_order(s, t)?;
        Ok(self.taus[1..].iter().filter(|&&tau| tau > s && tau <= t).count())
    }

    /// Transitions used by the signal, in order.
    pub fn transitions(&self) -> impl Iterator<Item = Edge> + '_ {
        self.modes.windows(2).map(|w| (w[0], w[1]))
    }
}

fn check_order(s: f64, t: f64) -> Result<(), SignalError> {
    if s >= 0.0 && s < t {
        Ok(())
    } else {
        Err(SignalError::Ordering { s, t })
    }
}

/// One rate bound: a rate function and its strictly positive offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBound {
    pub rate: RateFunction,
    pub offset: f64,
}

impl ModeBound {
    pub fn new(rate: RateFunction, offset: f64) -> Self {
        ModeBound { rate, offset }
    }
}

/// Duration bounds per mode and count bounds per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBoundSet {
    /// `T^S_j(s,t) ≥ −offset + ρ(t−s)`.
    pub stable: BTreeMap<usize, ModeBound>,
    /// `T^U_k(s,t) ≤ offset + ρ(t−s)`.
    pub unstable: BTreeMap<usize, ModeBound>,
    /// `N_mn(s,t) ≤ offset + ρ(t−s)`.
    pub transitions: BTreeMap<Edge, ModeBound>,
}

impl RateBoundSet {
    pub fn new(
        stable: BTreeMap<usize, ModeBound>,
        unstable: BTreeMap<usize, ModeBound>,
        transitions: BTreeMap<Edge, ModeBound>,
    ) -> Result<Self, SignalError> {
        let check = |what: String, b: &ModeBound| -> Result<(), SignalError> {
            if !(b.offset.is_finite() && b.offset > 0.0) {
                return Err(SignalError::InvalidBound {
                    what,
                    reason: format!("offset must be > 0 (got {})", b.offset),
                });
            }
            if !b.rate.is_class_fk_infinity() {
                return Err(SignalError::InvalidBound {
                    what,
                    reason: "rate must vanish at s = 0 and have a positive coefficient".into(),
                });
            }
            Ok(())
        };
        for (m, b) in &stable {
            check(format!("stable mode {m}"), b)?;
        }
        for (m, b) in &unstable {
            check(format!("unstable mode {m}"), b)?;
            if stable.contains_key(m) {
                return Err(SignalError::InvalidBound {
                    what: format!("mode {m}"),
                    reason: "declared both stable and unstable".into(),
                });
            }
        }
        for (e, b) in &transitions {
            check(format!("transition {}->{}", e.0, e.1), b)?;
        }
        Ok(RateBoundSet {
            stable,
            unstable,
            transitions,
        })
    }

    /// Requires one bound per stable mode, per unstable mode and per
    /// admissible transition of `fam`, and nothing else.
    pub fn validate_against(&self, fam: &SwitchedFamily) -> Result<(), SignalError> {
        let p = fam.partition_modes();
        let stable: BTreeSet<usize> = self.stable.keys().copied().collect();
        let unstable: BTreeSet<usize> = self.unstable.keys().copied().collect();
        let edges: BTreeSet<Edge> = self.transitions.keys().copied().collect();
        if stable != p.stable {
            return Err(SignalError::BoundsMismatch(format!(
                "stable bounds cover {stable:?}, family stable modes are {:?}",
                p.stable
            )));
        }
        if unstable != p.unstable {
            return Err(SignalError::BoundsMismatch(format!(
                "unstable bounds cover {unstable:?}, family unstable modes are {:?}",
                p.unstable
            )));
        }
        if edges != fam.edges() {
            return Err(SignalError::BoundsMismatch(format!(
                "transition bounds cover {edges:?}, admissible transitions are {:?}",
                fam.edges()
            )));
        }
        Ok(())
    }

    /// `ρ_N = Σ ρ_mn`.
    pub fn aggregate_transition_rate(&self) -> RateFunction {
        RateFunction::sum(self.transitions.values().map(|b| &b.rate))
    }

    /// `N₀ = Σ N̄_mn`.
    pub fn aggregate_transition_offset(&self) -> f64 {
        self.transitions.values().map(|b| b.offset).sum()
    }

    /// `Σ T̄^S + Σ T̄^U + Σ N̄`.
    pub fn total_offset(&self) -> f64 {
        self.stable
            .values()
            .chain(self.unstable.values())
            .chain(self.transitions.values())
            .map(|b| b.offset)
            .sum()
    }

    pub fn is_stable(&self, mode: usize) -> bool {
        self.stable.contains_key(&mode)
    }

    fn knows_mode(&self, mode: usize) -> bool {
        self.stable.contains_key(&mode) || self.unstable.contains_key(&mode)
    }
}

// ---------------------------------------------------------------------------
// Interval checks

/// Which inequality an interval violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    StableDuration(usize),
    UnstableDuration(usize),
    TransitionCount(Edge),
    TotalCount,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundKind::StableDuration(m) => write!(f, "stable duration of mode {m}"),
            BoundKind::UnstableDuration(m) => write!(f, "unstable duration of mode {m}"),
            BoundKind::TransitionCount((a, b)) => write!(f, "switch count {a}->{b}"),
            BoundKind::TotalCount => write!(f, "total switch count"),
        }
    }
}

/// A violated interval inequality. Counts include a switch sitting exactly
/// at `start`, i.e. the interval is `]start⁻, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub kind: BoundKind,
    pub start: f64,
    pub end: f64,
    pub observed: f64,
    pub bound: f64,
}

impl fmt::Display for BoundViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.kind {
            BoundKind::StableDuration(_) => ">=",
            _ => "<=",
        };
        write!(
            f,
            "{} on ]{}, {}]: observed {} but need {} {}",
            self.kind, self.start, self.end, self.observed, rel, self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub points: usize,
    pub intervals: u64,
    pub violation: Option<BoundViolation>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone)]
enum Rule {
    AtLeast { col: usize, mode: usize, offset: f64, rate: RateFunction },
    AtMost { col: usize, mode: usize, offset: f64, rate: RateFunction },
    Count { col: usize, edge: Edge, offset: f64, rate: RateFunction },
    Total { offset: f64, per_unit: f64 },
}

/// Prefix sums of durations and counts at a growing list of time points.
struct Ledger {
    modes: Vec<usize>,
    edges: Vec<Edge>,
    points: Vec<f64>,
    durations: Vec<f64>,
    upto: Vec<u32>,
    before: Vec<u32>,
    total_upto: Vec<u32>,
    total_before: Vec<u32>,
    rules: Vec<Rule>,
}

impl Ledger {
    fn new(modes: Vec<usize>, edges: Vec<Edge>, rules: Vec<Rule>) -> Self {
        Ledger {
            points: vec![0.0],
            durations: vec![0.0; modes.len()],
            upto: vec![0; edges.len()],
            before: vec![0; edges.len()],
            total_upto: vec![0],
            total_before: vec![0],
            modes,
            edges,
            rules,
        }
    }

    fn for_bounds(bounds: &RateBoundSet) -> Self {
        let modes: Vec<usize> = bounds.stable.keys().chain(bounds.unstable.keys()).copied().collect();
        let edges: Vec<Edge> = bounds.transitions.keys().copied().collect();
        let col = |m: usize| modes.iter().position(|&x| x == m).unwrap();
        let mut rules = Vec::new();
        for (&m, b) in &bounds.stable {
            rules.push(Rule::AtLeast {
                col: col(m),
                mode: m,
                offset: b.offset,
                rate: b.rate.clone(),
            });
        }
        for (&m, b) in &bounds.unstable {
            rules.push(Rule::AtMost {
                col: col(m),
                mode: m,
                offset: b.offset,
                rate: b.rate.clone(),
            });
        }
        for (k, (&e, b)) in bounds.transitions.iter().enumerate() {
            rules.push(Rule::Count {
                col: k,
                edge: e,
                offset: b.offset,
                rate: b.rate.clone(),
            });
        }
        Ledger::new(modes, edges, rules)
    }

    fn for_adt(modes: Vec<usize>, tau_a: f64, n0: f64) -> Self {
        Ledger::new(
            modes,
            Vec::new(),
            vec![Rule::Total {
                offset: n0,
                per_unit: 1.0 / tau_a,
            }],
        )
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    fn last_time(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Appends point `t` closing `]prev, t]` in `mode`, with an optional
    /// switch at `t`.
    fn push(&mut self, t: f64, mode: usize, switch: Option<Edge>) {
        let prev = self.last_time();
        let nm = self.modes.len();
        let base = self.durations.len() - nm;
        for c in 0..nm {
            let mut d = self.durations[base + c];
            if self.modes[c] == mode {
                d += t - prev;
            }
            self.durations.push(d);
        }
        let ne = self.edges.len();
        let base = self.upto.len() - ne;
        for c in 0..ne {
            let b = self.upto[base + c];
            self.before.push(b);
            self.upto.push(b + u32::from(switch == Some(self.edges[c])));
        }
        let tb = *self.total_upto.last().unwrap();
        self.total_before.push(tb);
        self.total_upto.push(tb + u32::from(switch.is_some()));
        self.points.push(t);
    }

    fn pop(&mut self) {
        self.points.pop();
        let nm = self.modes.len();
        self.durations.truncate(self.durations.len() - nm);
        let ne = self.edges.len();
        self.upto.truncate(self.upto.len() - ne);
        self.before.truncate(self.before.len() - ne);
        self.total_upto.pop();
        self.total_before.pop();
    }

    /// Pushes and keeps the point only if no interval ending at it is
    /// violated.
    fn try_push(&mut self, t: f64, mode: usize, switch: Option<Edge>) -> bool {
        self.push(t, mode, switch);
        if self.violation_at_last().is_some() {
            self.pop();
            false
        } else {
            true
        }
    }

    /// Shortest violated interval ending at the last point, if any.
    fn violation_at_last(&self) -> Option<BoundViolation> {
        let b = self.len() - 1;
        let tb = self.points[b];
        let nm = self.modes.len();
        let ne = self.edges.len();
        for a in (0..=b).rev() {
            let ta = self.points[a];
            let len = tb - ta;
            for rule in &self.rules {
                let v = match rule {
                    Rule::AtLeast { col, mode, offset, rate } if a < b => {
                        let obs = self.durations[b * nm + col] - self.durations[a * nm + col];
                        let need = -offset + rate.value(len);
                        (obs < need - BOUND_TOLERANCE).then_some((BoundKind::StableDuration(*mode), obs, need))
                    }
                    Rule::AtMost { col, mode, offset, rate } if a < b => {
                        let obs = self.durations[b * nm + col] - self.durations[a * nm + col];
                        let cap = offset + rate.value(len);
                        (obs > cap + BOUND_TOLERANCE).then_some((BoundKind::UnstableDuration(*mode), obs, cap))
                    }
                    Rule::Count { col, edge, offset, rate } => {
                        let obs = (self.upto[b * ne + col] - self.before[a * ne + col]) as f64;
                        let cap = offset + rate.value(len);
                        (obs > cap + BOUND_TOLERANCE).then_some((BoundKind::TransitionCount(*edge), obs, cap))
                    }
                    Rule::Total { offset, per_unit } => {
                        let obs = (self.total_upto[b] - self.total_before[a]) as f64;
                        let cap = offset + per_unit * len;
                        (obs > cap + BOUND_TOLERANCE).then_some((BoundKind::TotalCount, obs, cap))
                    }
                    _ => None,
                };
                if let Some((kind, observed, bound)) = v {
                    return Some(BoundViolation {
                        kind,
                        start: ta,
                        end: tb,
                        observed,
                        bound,
                    });
                }
            }
        }
        None
    }

    /// Replays `sig` over the grid `{0, h, …, T}` plus its switching
    /// instants and returns the first violation by right endpoint.
    fn scan(mut self, sig: &SwitchingSignal, horizon: f64, h: f64) -> BoundReport {
        let points = check_points(sig, horizon, h);
        let mut intervals = 0u64;
        let mut next_switch = 1;
        for &t in &points[1..] {
            let mut switch = None;
            while next_switch < sig.taus.len() && sig.taus[next_switch] < t {
                next_switch += 1;
            }
            if next_switch < sig.taus.len() && sig.taus[next_switch] == t {
                switch = Some((sig.modes[next_switch - 1], sig.modes[next_switch]));
            }
            self.push(t, sig.mode_before(t), switch);
            intervals += self.len() as u64;
            if let Some(v) = self.violation_at_last() {
                return BoundReport {
                    points: points.len(),
                    intervals,
                    violation: Some(v),
                };
            }
        }
        BoundReport {
            points: points.len(),
            intervals,
            violation: None,
        }
    }
}

fn grid(horizon: f64, h: f64) -> Vec<f64> {
    let n = (horizon / h - 1e-9).ceil().max(0.0) as usize;
    let mut g: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    g.push(horizon);
    g
}

/// Grid `{0, h, …, T}` merged with the switching instants in `]0, T]`.
fn check_points(sig: &SwitchingSignal, horizon: f64, h: f64) -> Vec<f64> {
    let mut pts = grid(horizon, h);
    pts.extend(sig.taus[1..].iter().copied().filter(|&t| t <= horizon));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn require_grid(horizon: f64, h: f64) -> Result<(), SignalError> {
    if !(horizon > 0.0 && horizon.is_finite()) || !(h >= MIN_HOLDING_TIME && h.is_finite()) {
        return Err(SignalError::InvalidParameter(format!(
            "need horizon > 0 and grid step >= {MIN_HOLDING_TIME} (got horizon={horizon}, step={h})"
        )));
    }
    Ok(())
}

/// Checks every duration and count bound on all intervals whose endpoints
/// lie on the grid `{0, h, …, T}` or at switching instants.
pub fn check_signal_bounds(
    sig: &SwitchingSignal,
    bounds: &RateBoundSet,
    horizon: f64,
    h: f64,
) -> Result<BoundReport, SignalError> {
    require_grid(horizon, h)?;
    for (i, &m) in sig.modes.iter().enumerate() {
        if !bounds.knows_mode(m) {
            return Err(SignalError::UnknownMode { index: i, mode: m });
        }
        if i > 0 && !bounds.transitions.contains_key(&(sig.modes[i - 1], m)) {
            return Err(SignalError::NotAdmissible {
                index: i,
                from: sig.modes[i - 1],
                to: m,
            });
        }
    }
    Ok(Ledger::for_bounds(bounds).scan(sig, horizon, h))
}

/// Checks `N_σ(s,t) ≤ N₀ + (t−s)/τ_a` on all grid and switch intervals.
pub fn check_adt(
    sig: &SwitchingSignal,
    tau_a: f64,
    n0: f64,
    horizon: f64,
    h: f64,
) -> Result<BoundReport, SignalError> {
    require_grid(horizon, h)?;
    require_adt(tau_a, n0)?;
    let modes: BTreeSet<usize> = sig.modes.iter().copied().collect();
    Ok(Ledger::for_adt(modes.into_iter().collect(), tau_a, n0).scan(sig, horizon, h))
}

fn require_adt(tau_a: f64, n0: f64) -> Result<(), SignalError> {
    if !(tau_a > 0.0 && tau_a.is_finite()) || !(n0 >= 0.0 && n0.is_finite()) {
        return Err(SignalError::InvalidParameter(format!(
            "need tau_a > 0 and N0 >= 0 (got tau_a={tau_a}, N0={n0})"
        )));
    }
    Ok(())
}

fn check_cycle(cycle: &[usize], edges: &BTreeSet<Edge>) -> Result<(), SignalError> {
    if cycle.is_empty() {
        return Err(SignalError::IncompatibleCycle("empty mode cycle".into()));
    }
    if cycle.len() == 1 {
        return Ok(());
    }
    for k in 0..cycle.len() {
        let e = (cycle[k], cycle[(k + 1) % cycle.len()]);
        if !edges.contains(&e) {
            return Err(SignalError::IncompatibleCycle(format!(
                "transition {}->{} is not admissible",
                e.0, e.1
            )));
        }
    }
    Ok(())
}

fn cycle_modes(cycle: &[usize], count: usize) -> Vec<usize> {
    (0..count).map(|i| cycle[i % cycle.len()]).collect()
}

// ---------------------------------------------------------------------------
// Generators

/// Parameters of [`generate_admissible_signal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleOptions {
    pub horizon: f64,
    pub grid_step: f64,
    pub mode_cycle: Vec<usize>,
}

/// Greedy signal on the grid `{0, h, …, T}` that satisfies every bound.
///
/// Stable modes are left as soon as the next transition is allowed and
/// the next mode can be held; unstable modes are held until one more step
/// would break a bound. Entering an unstable mode is only accepted if a
/// feasible exit exists before its duration budget runs out. The result is
/// re-checked with [`check_signal_bounds`].
pub fn generate_admissible_signal(
    bounds: &RateBoundSet,
    edges: &BTreeSet<Edge>,
    opts: &AdmissibleOptions,
) -> Result<SwitchingSignal, SignalError> {
    let (horizon, h, cycle) = (opts.horizon, opts.grid_step, &opts.mode_cycle);
    require_grid(horizon, h)?;
    check_cycle(cycle, edges)?;
    for &m in cycle {
        if !bounds.knows_mode(m) {
            return Err(SignalError::IncompatibleCycle(format!("mode {m} has no duration bound")));
        }
    }
    if cycle.len() > 1 {
        for k in 0..cycle.len() {
            let e = (cycle[k], cycle[(k + 1) % cycle.len()]);
            if !bounds.transitions.contains_key(&e) {
                return Err(SignalError::IncompatibleCycle(format!(
                    "transition {}->{} has no count bound",
                    e.0, e.1
                )));
            }
        }
    }
    let times = grid(horizon, h);
    let mut ledger = Ledger::for_bounds(bounds);
    let mut taus = vec![0.0];
    let mut modes = vec![cycle[0]];
    let mut pos = 0usize;
    let next_of = |p: usize| (p + 1) % cycle.len();

    for k in 1..times.len() {
        let cur = cycle[pos];
        let t = times[k];
        let last = k + 1 == times.len();

        let stay_ok = if ledger.try_push(t, cur, None) {
            let ok = last || {
                let ok = ledger.try_push(times[k + 1], cur, None);
                if ok {
                    ledger.pop();
                }
                ok
            };
            ledger.pop();
            ok
        } else {
            false
        };

        let switch_ok = cycle.len() > 1 && {
            let nxt_pos = next_of(pos);
            let edge = (cur, cycle[nxt_pos]);
            if ledger.try_push(t, cur, Some(edge)) {
                let ok = last || can_hold(&mut ledger, &times, k, cycle, nxt_pos);
                ledger.pop();
                ok
            } else {
                false
            }
        };

        let switch = if bounds.is_stable(cur) {
            if switch_ok {
                true
            } else if stay_ok {
                false
            } else {
                return Err(stuck(&mut ledger, t, cur));
            }
        } else if stay_ok {
            false
        } else if switch_ok {
            true
        } else {
            return Err(stuck(&mut ledger, t, cur));
        };

        if switch {
            let nxt_pos = next_of(pos);
            ledger.push(t, cur, Some((cur, cycle[nxt_pos])));
            taus.push(t);
            modes.push(cycle[nxt_pos]);
            pos = nxt_pos;
        } else {
            ledger.push(t, cur, None);
        }
    }

    let sig = SwitchingSignal::new(taus, modes)?;
    let report = check_signal_bounds(&sig, bounds, horizon, h)?;
    match report.violation {
        None => Ok(sig),
        Some(v) => Err(SignalError::Infeasible(format!("generated signal fails re-check: {v}"))),
    }
}

fn stuck(ledger: &mut Ledger, t: f64, mode: usize) -> SignalError {
    ledger.push(t, mode, None);
    let why = ledger
        .violation_at_last()
        .map(|v| v.to_string())
        .unwrap_or_else(|| "no admissible continuation".into());
    SignalError::Infeasible(format!("at t={t} in mode {mode}: {why}"))
}

/// Whether the mode at `cycle[pos]`, entered at `times[k]`, can be held
/// until leaving it is allowed, without breaking any bound on the way. For
/// unstable modes this is their own budget; for stable ones it is the
/// duration floor of the other stable modes.
fn can_hold(
    ledger: &mut Ledger,
    times: &[f64],
    k: usize,
    cycle: &[usize],
    pos: usize,
) -> bool {
    let mode = cycle[pos];
    let exit = (mode, cycle[(pos + 1) % cycle.len()]);
    let mut pushed = 0;
    let mut safe = false;
    for j in k + 1..times.len() {
        if !ledger.try_push(times[j], mode, None) {
            break;
        }
        ledger.pop();
        if j + 1 == times.len() {
            safe = true;
            break;
        }
        if ledger.try_push(times[j], mode, Some(exit)) {
            ledger.pop();
            safe = true;
            break;
        }
        ledger.push(times[j], mode, None);
        pushed += 1;
    }
    for _ in 0..pushed {
        ledger.pop();
    }
    safe
}

/// Switching instants of the densest admissible placement ending at `t`:
/// `t − ρ_N⁻¹(k)` for `k = 1, …, ⌊ρ_N(t)⌋`, plus `extra` switches packed
/// into `[t − ε, t]`. Placements at or below `MIN_HOLDING_TIME` coincide
/// with the initial instant and are dropped.
pub fn worst_case_switch_times(rate_n: &RateFunction, extra: usize, t: f64) -> Result<Vec<f64>, SignalError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(SignalError::InvalidParameter(format!("horizon must be > 0 (got {t})")));
    }
    let levels = rate_n.eval(0.0, t)?.floor() as u64;
    let mut taus = Vec::new();
    for k in 1..=levels {
        let s = rate_n.invert(t, k as f64)?;
        let tau = t - s;
        if tau > MIN_HOLDING_TIME {
            taus.push(tau);
        }
    }
    for j in 0..extra {
        taus.push(t - EXTRA_SWITCH_WINDOW * j as f64 / extra as f64);
    }
    taus.sort_by(f64::total_cmp);
    let mut prev = 0.0;
    for &tau in &taus {
        if tau - prev < MIN_HOLDING_TIME {
            return Err(SignalError::Infeasible(format!(
                "placements {prev} and {tau} are closer than the minimum holding time"
            )));
        }
        prev = tau;
    }
    Ok(taus)
}

/// Parameters of [`generate_worst_case_signal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseOptions {
    pub horizon: f64,
    pub mode_cycle: Vec<usize>,
    /// Switches packed just before the horizon; defaults to `⌊Σ N̄_mn⌋`.
    #[serde(default)]
    pub extra_switches: Option<usize>,
    pub grid_step: f64,
}

/// Signal with the densest switch placement the aggregate count bound
/// allows before the horizon, checked against every bound.
pub fn generate_worst_case_signal(
    bounds: &RateBoundSet,
    edges: &BTreeSet<Edge>,
    opts: &WorstCaseOptions,
) -> Result<SwitchingSignal, SignalError> {
    check_cycle(&opts.mode_cycle, edges)?;
    let extra = opts
        .extra_switches
        .unwrap_or(bounds.aggregate_transition_offset().floor() as usize);
    let rate_n = bounds.aggregate_transition_rate();
    let mut taus = vec![0.0];
    taus.extend(worst_case_switch_times(&rate_n, extra, opts.horizon)?);
    if taus.len() > 1 && opts.mode_cycle.len() < 2 {
        return Err(SignalError::IncompatibleCycle("switches need at least two modes".into()));
    }
    let modes = cycle_modes(&opts.mode_cycle, taus.len());
    let sig = SwitchingSignal::new(taus, modes)?;
    let report = check_signal_bounds(&sig, bounds, opts.horizon, opts.grid_step)?;
    match report.violation {
        None => Ok(sig),
        Some(v) => Err(SignalError::Infeasible(format!("worst-case placement violates a bound: {v}"))),
    }
}

/// Parameters of [`generate_adt_signal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdtOptions {
    pub tau_a: f64,
    pub n0: f64,
    pub horizon: f64,
    pub mode_cycle: Vec<usize>,
    /// `None` gives switches every `τ_a`; otherwise gaps are jittered.
    #[serde(default)]
    pub seed: Option<u64>,
    pub grid_step: f64,
}

/// Signal with average dwell time `τ_a` and chatter bound `N₀`, checked
/// post hoc with [`check_adt`].
///
/// The seeded variant draws gaps `τ_a·U(0.5, 1.5)` and delays each switch
/// to the earliest instant that keeps every window `[τᵢ, τ]` within
/// `N₀ + (τ − τᵢ)/τ_a`. With `N₀ < 1` no switch is ever admissible and the
/// signal is constant.
pub fn generate_adt_signal(edges: &BTreeSet<Edge>, opts: &AdtOptions) -> Result<SwitchingSignal, SignalError> {
    let (tau_a, n0, horizon, cycle) = (opts.tau_a, opts.n0, opts.horizon, &opts.mode_cycle);
    require_adt(tau_a, n0)?;
    require_grid(horizon, opts.grid_step)?;
    check_cycle(cycle, edges)?;
    let mut taus = vec![0.0];
    if cycle.len() > 1 && n0 >= 1.0 {
        match opts.seed {
            None => {
                let mut k = 1u64;
                while k as f64 * tau_a <= horizon {
                    taus.push(k as f64 * tau_a);
                    k += 1;
                }
            }
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                loop {
                    let prev = *taus.last().unwrap();
                    let mut tau = prev + tau_a * rng.gen_range(0.5..1.5);
                    tau = tau.max(prev + MIN_HOLDING_TIME);
                    // window [τᵢ, τ] holds (j − i + 1) switches
                    let j = taus.len();
                    for (i, &ti) in taus.iter().enumerate().skip(1) {
                        tau = tau.max(ti + tau_a * ((j - i + 1) as f64 - n0));
                    }
                    if tau > horizon {
                        break;
                    }
                    taus.push(tau);
                }
            }
        }
    }
    let modes = cycle_modes(cycle, taus.len());
    let sig = SwitchingSignal::new(taus, modes)?;
    let report = check_adt(&sig, tau_a, n0, horizon, opts.grid_step)?;
    match report.violation {
        None => Ok(sig),
        Some(v) => Err(SignalError::Infeasible(format!("ADT re-check failed: {v}"))),
    }
}

// ---------------------------------------------------------------------------
// CSV

pub const SIGNAL_CSV_HEADER: [&str; 2] = ["tau", "mode"];

/// Writes one `tau,mode` row per switching instant.
pub fn write_signal_csv<W: Write>(sig: &SwitchingSignal, w: W) -> Result<(), SignalError> {
    let mut wr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| SignalError::Csv(e.to_string());
    wr.write_record(SIGNAL_CSV_HEADER).map_err(csv_err)?;
    for (tau, mode) in sig.taus.iter().zip(&sig.modes) {
        wr.write_record([tau.to_string(), mode.to_string()]).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| SignalError::Csv(e.to_string()))
}

pub fn read_signal_csv<R: Read>(r: R) -> Result<SwitchingSignal, SignalError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = rd.headers().map_err(|e| SignalError::Csv(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != SIGNAL_CSV_HEADER {
        return Err(SignalError::Csv(format!("expected header `tau,mode`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut taus = Vec::new();
    let mut modes = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| SignalError::Csv(e.to_string()))?;
        let bad = |what: &str| SignalError::Csv(format!("row {}: invalid {what}", row + 1));
        taus.push(rec.get(0).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| bad("tau"))?);
        modes.push(rec.get(1).and_then(|s| s.trim().parse::<usize>().ok()).ok_or_else(|| bad("mode"))?);
    }
    SwitchingSignal::new(taus, modes)
}
