//! Finite families of subsystems `ẋ = fᵢ(x, v)` with their Lyapunov-like
//! data, and sampled checks of the sandwich, decay and comparability
//! inequalities.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{state_input_vars, CompiledExpr, DomainError, Expr, ExprError};

/// Ordered pair `(from, to)` of 1-based mode labels.
pub type Edge = (usize, usize);

/// Relative slack applied to every sampled inequality.
pub const SAMPLE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("mode {mode} has decay rate 0; every rate must be nonzero")]
    ZeroRate { mode: usize },
    #[error("mode {mode} has non-finite decay rate")]
    NonFiniteRate { mode: usize },
    #[error("transition {0}->{1} is a self-loop")]
    SelfLoop(usize, usize),
    #[error("transition {from}->{to} references an unknown mode")]
    UnknownMode { from: usize, to: usize },
    #[error("mode {0} does not exist")]
    NoSuchMode(usize),
    #[error("transition {0}->{1} is not admissible")]
    NotAdmissible(usize, usize),
    #[error("mu for {from}->{to} must be finite and > 0 (got {mu})")]
    NonPositiveMu { from: usize, to: usize, mu: f64 },
    #[error("mode {mode}: vector field has {got} components, state dimension is {expected}")]
    DimensionMismatch {
        mode: usize,
        expected: usize,
        got: usize,
    },
    #[error("comparison bound {name} must have a > 0 and p > 0 (got a={a}, p={p})")]
    InvalidBound { name: &'static str, a: f64, p: f64 },
    #[error("family must contain at least one mode")]
    Empty,
    #[error("sample box is empty or malformed: {0}")]
    InvalidBox(String),
    #[error("mode {mode}: Lyapunov function vanishes at nonzero sample {point:?}")]
    DegenerateLyapunov { mode: usize, point: Vec<f64> },
    #[error("{context}: {source}")]
    Expr {
        context: String,
        #[source]
        source: ExprError,
    },
}

/// `a·r^p`, a class-K∞ comparison function for `a, p > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBound {
    pub a: f64,
    pub p: f64,
}

impl PowerBound {
    pub fn new(a: f64, p: f64) -> Self {
        PowerBound { a, p }
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.a * r.powf(self.p)
    }

    fn validate(&self, name: &'static str) -> Result<(), FamilyError> {
        if self.a.is_finite() && self.a > 0.0 && self.p.is_finite() && self.p > 0.0 {
            Ok(())
        } else {
            Err(FamilyError::InvalidBound {
                name,
                a: self.a,
                p: self.p,
            })
        }
    }
}

/// One subsystem: vector field, Lyapunov function and decay rate.
#[derive(Debug, Clone)]
pub struct Subsystem {
    /// 1-based mode label.
    pub index: usize,
    pub field: Vec<Expr>,
    pub lyapunov: Expr,
    pub lambda: f64,
    compiled_field: Vec<CompiledExpr>,
    compiled_v: CompiledExpr,
    compiled_grad: Vec<CompiledExpr>,
}

impl Subsystem {
    /// `f(x, v)` into `out`; `slots` holds `x` followed by `v`.
    #[inline]
    pub fn field_into(&self, slots: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        for (o, f) in out.iter_mut().zip(&self.compiled_field) {
            *o = f.eval(slots)?;
        }
        Ok(())
    }

    /// `V(ξ)`; `slots` must start with the state.
    #[inline]
    pub fn lyapunov_value(&self, slots: &[f64]) -> Result<f64, DomainError> {
        self.compiled_v.eval(slots)
    }

    /// `⟨∇V(ξ), f(ξ, η)⟩`; `slots` holds `ξ` followed by `η`.
    pub fn lie_derivative(&self, slots: &[f64]) -> Result<f64, DomainError> {
        let mut total = 0.0;
        for (g, f) in self.compiled_grad.iter().zip(&self.compiled_field) {
            total += g.eval(slots)? * f.eval(slots)?;
        }
        Ok(total)
    }

    pub fn is_stable(&self) -> bool {
        self.lambda > 0.0
    }
}

/// Declaration of one subsystem before validation.
#[derive(Debug, Clone)]
pub struct SubsystemSpec {
    pub field: Vec<Expr>,
    pub lyapunov: Expr,
    pub lambda: f64,
}

/// Validated switched family.
#[derive(Debug, Clone)]
pub struct SwitchedFamily {
    state_dim: usize,
    input_dim: usize,
    subsystems: Vec<Subsystem>,
    mu: BTreeMap<Edge, f64>,
    alpha_lower: PowerBound,
    alpha_upper: PowerBound,
    gain: Expr,
    compiled_gain: CompiledExpr,
}

/// Mode sets split by the sign of the decay rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePartition {
    pub stable: BTreeSet<usize>,
    pub unstable: BTreeSet<usize>,
}

/// Splits 1-based modes by the sign of their rate; a zero rate is invalid.
pub fn partition_by_rate(lambdas: &[f64]) -> Result<ModePartition, FamilyError> {
    let mut stable = BTreeSet::new();
    let mut unstable = BTreeSet::new();
    for (i, &l) in lambdas.iter().enumerate() {
        let mode = i + 1;
        if !l.is_finite() {
            return Err(FamilyError::NonFiniteRate { mode });
        }
        if l > 0.0 {
            stable.insert(mode);
        } else if l < 0.0 {
            unstable.insert(mode);
        } else {
            return Err(FamilyError::ZeroRate { mode });
        }
    }
    Ok(ModePartition { stable, unstable })
}

impl SwitchedFamily {
    /// Builds and validates a family. Modes are labelled `1..=N` in the
    /// order given.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        specs: Vec<SubsystemSpec>,
        mu: BTreeMap<Edge, f64>,
        alpha_lower: PowerBound,
        alpha_upper: PowerBound,
        gain: Expr,
    ) -> Result<Self, FamilyError> {
        if specs.is_empty() {
            return Err(FamilyError::Empty);
        }
        partition_by_rate(&specs.iter().map(|s| s.lambda).collect::<Vec<_>>())?;
        alpha_lower.validate("alpha_lower")?;
        alpha_upper.validate("alpha_upper")?;
        let n = specs.len();
        for (&(i, j), &m) in &mu {
            if i == j {
                return Err(FamilyError::SelfLoop(i, j));
            }
            if i == 0 || j == 0 || i > n || j > n {
                return Err(FamilyError::UnknownMode { from: i, to: j });
            }
            if !(m.is_finite() && m > 0.0) {
                return Err(FamilyError::NonPositiveMu {
                    from: i,
                    to: j,
                    mu: m,
                });
            }
        }
        let names = state_input_vars(state_dim, input_dim);
        let order: Vec<&str> = names.iter().map(String::as_str).collect();
        let state_order = &order[..state_dim];
        let compile = |e: &Expr, allowed: &[&str], context: String| {
            let vars = e.variables();
            if let Some(bad) = vars.iter().find(|v| !allowed.contains(&v.as_str())) {
                return Err(FamilyError::Expr {
                    context,
                    source: ExprError::UnknownVariable {
                        name: bad.clone(),
                        position: 0,
                    },
                });
            }
            e.compile(&order)
                .map_err(|source| FamilyError::Expr { context, source })
        };
        let mut subsystems = Vec::with_capacity(n);
        for (k, spec) in specs.into_iter().enumerate() {
            let mode = k + 1;
            if spec.field.len() != state_dim {
                return Err(FamilyError::DimensionMismatch {
                    mode,
                    expected: state_dim,
                    got: spec.field.len(),
                });
            }
            let compiled_field = spec
                .field
                .iter()
                .enumerate()
                .map(|(c, f)| compile(f, &order, format!("mode {mode} field[{c}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let compiled_v = compile(&spec.lyapunov, state_order, format!("mode {mode} lyapunov"))?;
            let compiled_grad = state_order
                .iter()
                .map(|x| {
                    compile(
                        &spec.lyapunov.differentiate(x),
                        state_order,
                        format!("mode {mode} d lyapunov/d {x}"),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            subsystems.push(Subsystem {
                index: mode,
                field: spec.field,
                lyapunov: spec.lyapunov,
                lambda: spec.lambda,
                compiled_field,
                compiled_v,
                compiled_grad,
            });
        }
        let gain_vars = gain.variables();
        if let Some(bad) = gain_vars.iter().find(|v| v.as_str() != "r") {
            return Err(FamilyError::Expr {
                context: "gain".into(),
                source: ExprError::UnknownVariable {
                    name: bad.clone(),
                    position: 0,
                },
            });
        }
        let compiled_gain = gain.compile(&["r"]).map_err(|source| FamilyError::Expr {
            context: "gain".into(),
            source,
        })?;
        Ok(SwitchedFamily {
            state_dim,
            input_dim,
            subsystems,
            mu,
            alpha_lower,
            alpha_upper,
            gain,
            compiled_gain,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_modes(&self) -> usize {
        self.subsystems.len()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn subsystem(&self, mode: usize) -> Result<&Subsystem, FamilyError> {
        mode.checked_sub(1)
            .and_then(|k| self.subsystems.get(k))
            .ok_or(FamilyError::NoSuchMode(mode))
    }

    pub fn lambda(&self, mode: usize) -> Result<f64, FamilyError> {
        Ok(self.subsystem(mode)?.lambda)
    }

    pub fn has_mode(&self, mode: usize) -> bool {
        mode >= 1 && mode <= self.subsystems.len()
    }

    /// `μᵢⱼ` for an admissible transition.
    pub fn mu(&self, edge: Edge) -> Result<f64, FamilyError> {
        self.mu
            .get(&edge)
            .copied()
            .ok_or(FamilyError::NotAdmissible(edge.0, edge.1))
    }

    pub fn mu_map(&self) -> &BTreeMap<Edge, f64> {
        &self.mu
    }

    /// Admissible transitions in lexicographic order.
    pub fn edges(&self) -> BTreeSet<Edge> {
        self.mu.keys().copied().collect()
    }

    pub fn is_admissible(&self, edge: Edge) -> bool {
        self.mu.contains_key(&edge)
    }

    pub fn alpha_lower(&self) -> PowerBound {
        self.alpha_lower
    }

    pub fn alpha_upper(&self) -> PowerBound {
        self.alpha_upper
    }

    pub fn gain_expr(&self) -> &Expr {
        &self.gain
    }

    /// `γ(r)`.
    pub fn gain(&self, r: f64) -> Result<f64, DomainError> {
        self.compiled_gain.eval(&[r])
    }

    pub fn partition_modes(&self) -> ModePartition {
        partition_by_rate(&self.subsystems.iter().map(|s| s.lambda).collect::<Vec<_>>())
            .expect("rates validated at construction")
    }

    /// Sampled check of `α̲(‖ξ‖) ≤ Vᵢ(ξ) ≤ ᾱ(‖ξ‖)`.
    pub fn check_lyapunov_sandwich(
        &self,
        mode: usize,
        state_box: &SampleBox,
        n_samples: usize,
        seed: u64,
    ) -> Result<SampleReport, FamilyError> {
        let sub = self.subsystem(mode)?;
        self.require_dim(state_box, self.state_dim, "state")?;
        let points = state_box.sample_points(n_samples, seed);
        let outcomes: Vec<Outcome> = points
            .par_iter()
            .map(|xi| {
                let r = norm(xi);
                match sub.lyapunov_value(xi) {
                    Ok(v) => {
                        let lo = self.alpha_lower.eval(r);
                        let hi = self.alpha_upper.eval(r);
                        let margin = (lo - v).max(v - hi);
                        let scale = 1.0 + v.abs().max(hi);
                        Outcome::Margin(margin, margin > SAMPLE_SLACK * scale)
                    }
                    Err(e) => Outcome::Domain(e),
                }
            })
            .collect();
        Ok(SampleReport::collect(
            format!("sandwich mode {mode}"),
            points,
            outcomes,
        ))
    }

    /// Sampled check of `⟨∇Vᵢ(ξ), fᵢ(ξ,η)⟩ ≤ −λᵢVᵢ(ξ) + γ(‖η‖)`.
    pub fn check_lyapunov_decay(
        &self,
        mode: usize,
        state_box: &SampleBox,
        input_box: &SampleBox,
        n_samples: usize,
        seed: u64,
    ) -> Result<SampleReport, FamilyError> {
        self.subsystem(mode)?;
        self.require_dim(state_box, self.state_dim, "state")?;
        self.require_dim(input_box, self.input_dim, "input")?;
        let joint = state_box.product(input_box);
        let points = joint.sample_points(n_samples, seed);
        let outcomes: Vec<Outcome> = points
            .par_iter()
            .map(|p| match self.decay_margin(mode, p) {
                Ok(m) => {
                    let scale = 1.0 + m.lhs.abs() + m.bound.abs();
                    Outcome::Margin(m.margin, m.margin > SAMPLE_SLACK * scale)
                }
                Err(e) => Outcome::Domain(e),
            })
            .collect();
        Ok(SampleReport::collect(format!("decay mode {mode}"), points, outcomes))
    }

    /// Both sides of the decay inequality at `(ξ, η)` given as one slot
    /// vector `ξ ++ η`.
    pub fn decay_margin(&self, mode: usize, slots: &[f64]) -> Result<DecayMargin, DomainError> {
        let sub = &self.subsystems[mode - 1];
        let eta = &slots[self.state_dim..];
        let lhs = sub.lie_derivative(slots)?;
        let v = sub.lyapunov_value(slots)?;
        let bound = -sub.lambda * v + self.gain(norm(eta))?;
        Ok(DecayMargin {
            lhs,
            bound,
            margin: lhs - bound,
        })
    }

    /// Largest sampled `Vⱼ(ξ)/Vᵢ(ξ)` for the transition `i → j`, compared
    /// against `μᵢⱼ`.
    pub fn check_mu_compatibility(
        &self,
        edge: Edge,
        state_box: &SampleBox,
        n_samples: usize,
        seed: u64,
    ) -> Result<MuReport, FamilyError> {
        let mu = self.mu(edge)?;
        self.require_dim(state_box, self.state_dim, "state")?;
        let vi = self.subsystem(edge.0)?;
        let vj = self.subsystem(edge.1)?;
        let points = state_box.sample_points(n_samples, seed);
        let mut mu_hat = f64::NEG_INFINITY;
        let mut worst_point = None;
        let mut domain_errors = Vec::new();
        for xi in points {
            if xi.iter().all(|&c| c == 0.0) {
                continue;
            }
            let (a, b) = match (vi.lyapunov_value(&xi), vj.lyapunov_value(&xi)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    domain_errors.push((xi, e));
                    continue;
                }
            };
            if a == 0.0 {
                return Err(FamilyError::DegenerateLyapunov {
                    mode: edge.0,
                    point: xi,
                });
            }
            let ratio = b / a;
            if ratio > mu_hat {
                mu_hat = ratio;
                worst_point = Some(xi);
            }
        }
        Ok(MuReport {
            edge,
            mu,
            pass: domain_errors.is_empty() && mu_hat <= mu + SAMPLE_SLACK,
            mu_hat,
            worst_point,
            domain_errors,
        })
    }

    /// `γ(0) = 0` and strict increase along sorted samples of `[0, r_max]`.
    pub fn check_gain_candidate(&self, r_max: f64, n_samples: usize) -> GainReport {
        let mut problems = Vec::new();
        match self.gain(0.0) {
            Ok(g0) if g0.abs() <= SAMPLE_SLACK => {}
            Ok(g0) => problems.push(format!("gain(0) = {g0}")),
            Err(e) => problems.push(format!("gain(0): {e}")),
        }
        let n = n_samples.max(2);
        let mut prev = None;
        for k in 0..n {
            let r = r_max * k as f64 / (n - 1) as f64;
            match self.gain(r) {
                Ok(g) => {
                    if let Some((pr, pg)) = prev {
                        if g <= pg {
                            problems.push(format!("gain not increasing: gain({pr}) = {pg}, gain({r}) = {g}"));
                            break;
                        }
                    }
                    prev = Some((r, g));
                }
                Err(e) => {
                    problems.push(format!("gain({r}): {e}"));
                    break;
                }
            }
        }
        GainReport {
            pass: problems.is_empty(),
            problems,
        }
    }

    fn require_dim(&self, b: &SampleBox, dim: usize, what: &str) -> Result<(), FamilyError> {
        if b.dim() != dim {
            return Err(FamilyError::InvalidBox(format!(
                "{what} box has dimension {}, expected {dim}",
                b.dim()
            )));
        }
        Ok(())
    }
}

/// Euclidean norm.
#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayMargin {
    pub lhs: f64,
    pub bound: f64,
    /// `lhs − bound`; positive means violated.
    pub margin: f64,
}

/// Axis-aligned box `∏ [lowerₖ, upperₖ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SampleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, FamilyError> {
        let b = SampleBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, FamilyError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn validate(&self) -> Result<(), FamilyError> {
        if self.lower.len() != self.upper.len() {
            return Err(FamilyError::InvalidBox("bound lengths differ".into()));
        }
        for (k, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(FamilyError::InvalidBox(format!(
                    "axis {k}: [{l}, {u}] is not a finite interval"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn product(&self, other: &SampleBox) -> SampleBox {
        SampleBox {
            lower: self.lower.iter().chain(&other.lower).copied().collect(),
            upper: self.upper.iter().chain(&other.upper).copied().collect(),
        }
    }

    /// Deterministic sample: the first half are Halton points, the rest
    /// uniform draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample_points(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let n_halton = n / 2 + n % 2;
        let mut out = Vec::with_capacity(n);
        for k in 1..=n_halton {
            out.push(
                (0..self.dim())
                    .map(|d| self.scale(d, halton(k as u64, PRIMES[d % PRIMES.len()])))
                    .collect(),
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in n_halton..n {
            out.push(
                (0..self.dim())
                    .map(|d| self.scale(d, rng.gen::<f64>()))
                    .collect(),
            );
        }
        out
    }

    fn scale(&self, d: usize, u: f64) -> f64 {
        self.lower[d] + (self.upper[d] - self.lower[d]) * u
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `k` in base `b`.
fn halton(mut k: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while k > 0 {
        f /= b as f64;
        r += f * (k % b) as f64;
        k /= b;
    }
    r
}

enum Outcome {
    Margin(f64, bool),
    Domain(DomainError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationCause {
    Inequality,
    Domain(DomainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleViolation {
    pub point: Vec<f64>,
    /// Positive for a violated inequality; NaN for a domain error.
    pub margin: f64,
    pub cause: ViolationCause,
}

/// Result of a sampled inequality check.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub check: String,
    pub samples: usize,
    pub violations: Vec<SampleViolation>,
    /// Largest `lhs − rhs` seen; `−∞` if nothing evaluated.
    pub worst_margin: f64,
    pub worst_point: Option<Vec<f64>>,
}

impl SampleReport {
    fn collect(check: String, points: Vec<Vec<f64>>, outcomes: Vec<Outcome>) -> Self {
        let samples = points.len();
        let mut violations = Vec::new();
        let mut worst_margin = f64::NEG_INFINITY;
        let mut worst_point = None;
        for (p, o) in points.into_iter().zip(outcomes) {
            match o {
                Outcome::Margin(m, violated) => {
                    if m > worst_margin {
                        worst_margin = m;
                        worst_point = Some(p.clone());
                    }
                    if violated {
                        violations.push(SampleViolation {
                            point: p,
                            margin: m,
                            cause: ViolationCause::Inequality,
                        });
                    }
                }
                Outcome::Domain(e) => violations.push(SampleViolation {
                    point: p,
                    margin: f64::NAN,
                    cause: ViolationCause::Domain(e),
                }),
            }
        }
        SampleReport {
            check,
            samples,
            violations,
            worst_margin,
            worst_point,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuReport {
    pub edge: Edge,
    pub mu: f64,
    /// Largest sampled `Vⱼ/Vᵢ`.
    pub mu_hat: f64,
    pub worst_point: Option<Vec<f64>>,
    pub domain_errors: Vec<(Vec<f64>, DomainError)>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub pass: bool,
    pub problems: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, d: usize, m: usize) -> Expr {
        let names = state_input_vars(d, m);
        let order: Vec<&str> = names.iter().map(String::as_str).collect();
        Expr::parse(text, &order).unwrap()
    }

    fn scalar(field: &str, v: &str, lambda: f64, gain: &str, lo: PowerBound) -> SwitchedFamily {
        SwitchedFamily::new(
            1,
            1,
            vec![SubsystemSpec {
                field: vec![parse(field, 1, 1)],
                lyapunov: parse(v, 1, 0),
                lambda,
            }],
            BTreeMap::new(),
            lo,
            PowerBound::new(1.0, 2.0),
            Expr::parse(gain, &["r"]).unwrap(),
        )
        .unwrap()
    }

    pub(crate) fn benchmark() -> SwitchedFamily {
        SwitchedFamily::new(
            2,
            1,
            vec![
                SubsystemSpec {
                    field: vec![
                        parse("-x1 + sin(x1 - x2)", 2, 1),
                        parse("-x2 + 0.8*sin(x2 - x1) + 0.5*v1", 2, 1),
                    ],
                    lyapunov: parse("0.5*(x1^2 + 1.25*x2^2)", 2, 0),
                    lambda: 1.75,
                },
                SubsystemSpec {
                    field: vec![
                        parse("x1 + sin(x1 - x2)", 2, 1),
                        parse("x2 + sin(x2 - x1) + 0.5*v1", 2, 1),
                    ],
                    lyapunov: parse("0.5*(x1^2 + x2^2)", 2, 0),
                    lambda: -2.1667,
                },
            ],
            [((1, 2), 1.0), ((2, 1), 2.0)].into_iter().collect(),
            PowerBound::new(0.5, 2.0),
            PowerBound::new(0.625, 2.0),
            Expr::parse("r^2", &["r"]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn partitions_by_sign() {
        let p = partition_by_rate(&[1.75, -2.1667]).unwrap();
        assert_eq!(p.stable, BTreeSet::from([1]));
        assert_eq!(p.unstable, BTreeSet::from([2]));
        let p = partition_by_rate(&[1.0, 2.0, 3.0]).unwrap();
        assert!(p.unstable.is_empty());
        assert_eq!(partition_by_rate(&[1.0, 0.0]), Err(FamilyError::ZeroRate { mode: 2 }));
    }

    #[test]
    fn rejects_self_loops_and_bad_mu() {
        let mk = |mu: BTreeMap<Edge, f64>| {
            SwitchedFamily::new(
                1,
                0,
                vec![
                    SubsystemSpec {
                        field: vec![parse("-x1", 1, 0)],
                        lyapunov: parse("x1^2", 1, 0),
                        lambda: 1.0,
                    };
                    2
                ],
                mu,
                PowerBound::new(1.0, 2.0),
                PowerBound::new(1.0, 2.0),
                Expr::parse("r", &["r"]).unwrap(),
            )
        };
        assert!(matches!(mk([((1, 1), 1.0)].into()), Err(FamilyError::SelfLoop(1, 1))));
        assert!(matches!(mk([((1, 2), 0.0)].into()), Err(FamilyError::NonPositiveMu { .. })));
        assert!(matches!(mk([((1, 3), 1.0)].into()), Err(FamilyError::UnknownMode { .. })));
        assert!(mk([((1, 2), 1.0)].into()).is_ok());
    }

    #[test]
    fn sandwich_examples() {
        let bx = SampleBox::cube(1, -10.0, 10.0).unwrap();
        let ok = scalar("-x1 + v1", "x1^2/2", 1.0, "r^2/2", PowerBound::new(0.25, 2.0));
        assert!(ok.check_lyapunov_sandwich(1, &bx, 500, 1).unwrap().passed());
        let bad = scalar("-x1 + v1", "x1^2/2", 1.0, "r^2/2", PowerBound::new(1.0, 2.0));
        let rep = bad.check_lyapunov_sandwich(1, &bx, 500, 1).unwrap();
        // x = 0 meets the bound with equality; every other sample violates it.
        assert!(rep.violations.len() >= rep.samples - 1);

        let fam = benchmark();
        let bx2 = SampleBox::cube(2, -10.0, 10.0).unwrap();
        assert!(fam.check_lyapunov_sandwich(1, &bx2, 2000, 3).unwrap().passed());
    }

    #[test]
    fn decay_examples() {
        let sbox = SampleBox::cube(1, -10.0, 10.0).unwrap();
        let ibox = SampleBox::cube(1, -10.0, 10.0).unwrap();
        let fam = scalar("-x1 + v1", "x1^2/2", 1.0, "r^2/2", PowerBound::new(0.25, 2.0));
        assert!(fam.check_lyapunov_decay(1, &sbox, &ibox, 2000, 7).unwrap().passed());
        let growth = scalar("x1", "x1^2/2", -2.0, "r^2", PowerBound::new(0.25, 2.0));
        assert!(growth.check_lyapunov_decay(1, &sbox, &ibox, 2000, 7).unwrap().passed());
    }

    #[test]
    fn benchmark_decay_fails_at_unit_point() {
        let fam = benchmark();
        let zero_gain = SwitchedFamily {
            gain: Expr::Const(0.0),
            compiled_gain: Expr::Const(0.0).compile(&["r"]).unwrap(),
            ..fam
        };
        let m = zero_gain.decay_margin(1, &[1.0, 0.0, 0.0]).unwrap();
        // f1(1,0,0) = (-1 + sin 1, -0.8 sin 1) and ∇V1(1,0) = (1, 0)
        let lhs = -1.0 + 1f64.sin();
        assert!((m.lhs - lhs).abs() < 1e-15);
        assert!((m.bound + 0.875).abs() < 1e-15);
        assert!((m.margin - 0.7165).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn mu_examples() {
        let fam = benchmark();
        let bx = SampleBox::cube(2, -10.0, 10.0).unwrap();
        let rep = fam.check_mu_compatibility((2, 1), &bx, 4000, 11).unwrap();
        assert!(rep.pass);
        assert!(rep.mu_hat <= 1.25 + 1e-12 && rep.mu_hat > 1.2, "{}", rep.mu_hat);
        // V2/V1 peaks at 1 when x2 = 0, equal to mu12 = 1
        let rep = fam.check_mu_compatibility((1, 2), &bx, 4000, 11).unwrap();
        assert!(rep.mu_hat <= 1.0 + 1e-12);
    }

    #[test]
    fn identical_lyapunov_functions_give_unit_ratio() {
        let mk = |mu: f64| {
            SwitchedFamily::new(
                2,
                0,
                vec![
                    SubsystemSpec {
                        field: vec![parse("-x1", 2, 0), parse("-x2", 2, 0)],
                        lyapunov: parse("x1^2 + 3*x2^2", 2, 0),
                        lambda: 1.0,
                    };
                    2
                ],
                [((1, 2), mu)].into(),
                PowerBound::new(1.0, 2.0),
                PowerBound::new(3.0, 2.0),
                Expr::parse("r", &["r"]).unwrap(),
            )
            .unwrap()
        };
        let bx = SampleBox::cube(2, -5.0, 5.0).unwrap();
        let rep = mk(1.0).check_mu_compatibility((1, 2), &bx, 300, 0).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.mu_hat, 1.0);
        assert!(!mk(0.5).check_mu_compatibility((1, 2), &bx, 300, 0).unwrap().pass);
    }

    #[test]
    fn degenerate_lyapunov_is_an_error() {
        let fam = SwitchedFamily::new(
            2,
            0,
            vec![
                SubsystemSpec {
                    field: vec![parse("-x1", 2, 0), parse("-x2", 2, 0)],
                    lyapunov: parse("x1^2", 2, 0),
                    lambda: 1.0,
                },
                SubsystemSpec {
                    field: vec![parse("-x1", 2, 0), parse("-x2", 2, 0)],
                    lyapunov: parse("x1^2 + x2^2", 2, 0),
                    lambda: 1.0,
                },
            ],
            [((1, 2), 1.0)].into(),
            PowerBound::new(1.0, 2.0),
            PowerBound::new(1.0, 2.0),
            Expr::parse("r", &["r"]).unwrap(),
        )
        .unwrap();
        let bx = SampleBox::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert!(matches!(
            fam.check_mu_compatibility((1, 2), &bx, 10, 0),
            Err(FamilyError::DegenerateLyapunov { mode: 1, .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let bx = SampleBox::cube(3, -1.0, 1.0).unwrap();
        assert_eq!(bx.sample_points(101, 9), bx.sample_points(101, 9));
        assert_ne!(bx.sample_points(101, 9), bx.sample_points(101, 10));
    }

    #[test]
    fn gain_candidate() {
        let fam = scalar("-x1 + v1", "x1^2/2", 1.0, "r^2/2", PowerBound::new(0.25, 2.0));
        assert!(fam.check_gain_candidate(10.0, 100).pass);
        let flat = scalar("-x1 + v1", "x1^2/2", 1.0, "0", PowerBound::new(0.25, 2.0));
        assert!(!flat.check_gain_candidate(10.0, 100).pass);
    }
}
