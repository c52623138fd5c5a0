//! Rate functions `ρ(r, s) = k₂ + Σ cᵢ·s^pᵢ` and the checks built on them:
//! the pointwise decay condition on the weighted rate combination and the
//! summability series over switching instants.
//!
//! Every implemented rate function is independent of its first argument
//! `r`; the argument is still threaded through so call sites read like the
//! two-argument functions they stand for.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{Edge, SwitchedFamily};
use crate::signal::{RateBoundSet, SwitchingSignal};

/// Absolute tolerance on the level reached by [`RateFunction::invert`].
pub const INVERSION_TOLERANCE: f64 = 1e-10;
const INVERSION_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("rate term must have coef >= 0 and power > 0 (got coef={coef}, power={power})")]
    InvalidTerm { coef: f64, power: f64 },
    #[error("rate offset must be finite and >= 0 (got {0})")]
    InvalidOffset(f64),
    #[error("rate functions are defined for s >= 0 (got s={0})")]
    NegativeArgument(f64),
    #[error("cannot invert: level {level} is not reachable (rate at s=0 is {floor})")]
    NotInvertible { level: f64, floor: f64 },
    #[error("rate function is constant in s and cannot be inverted")]
    Constant,
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTerm {
    pub coef: f64,
    pub power: f64,
}

impl RateTerm {
    #[inline]
    fn eval(&self, s: f64) -> f64 {
        self.coef * fast_pow(s, self.power)
    }
}

#[inline]
fn fast_pow(s: f64, p: f64) -> f64 {
    if p == 1.0 {
        s
    } else if p == 1.5 {
        s * s.sqrt()
    } else if p == 0.5 {
        s.sqrt()
    } else if p == 2.0 {
        s * s
    } else {
        s.powf(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawRate {
    #[serde(default)]
    terms: Vec<RateTerm>,
    #[serde(default)]
    offset: f64,
}

/// Nonnegative combination of powers of `s` plus a constant offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRate", into = "RawRate")]
pub struct RateFunction {
    terms: Vec<RateTerm>,
    offset: f64,
}

impl TryFrom<RawRate> for RateFunction {
    type Error = RateError;

    fn try_from(raw: RawRate) -> Result<Self, Self::Error> {
        RateFunction::new(raw.terms, raw.offset)
    }
}

impl From<RateFunction> for RawRate {
    fn from(r: RateFunction) -> Self {
        RawRate {
            terms: r.terms,
            offset: r.offset,
        }
    }
}

impl RateFunction {
    pub fn new(terms: Vec<RateTerm>, offset: f64) -> Result<Self, RateError> {
        for t in &terms {
            if !(t.coef.is_finite() && t.coef >= 0.0 && t.power.is_finite() && t.power > 0.0) {
                return Err(RateError::InvalidTerm {
                    coef: t.coef,
                    power: t.power,
                });
            }
        }
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(RateError::InvalidOffset(offset));
        }
        Ok(RateFunction { terms, offset })
    }

    /// `Σ coef·s^power` from `(coef, power)` pairs, zero offset.
    pub fn from_terms(pairs: &[(f64, f64)]) -> Result<Self, RateError> {
        Self::new(
            pairs
                .iter()
                .map(|&(coef, power)| RateTerm { coef, power })
                .collect(),
            0.0,
        )
    }

    /// `k·s`.
    pub fn linear(k: f64) -> Result<Self, RateError> {
        Self::from_terms(&[(k, 1.0)])
    }

    pub fn with_offset(mut self, offset: f64) -> Result<Self, RateError> {
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(RateError::InvalidOffset(offset));
        }
        self.offset = offset;
        Ok(self)
    }

    pub fn terms(&self) -> &[RateTerm] {
        &self.terms
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `ρ(r, s)`; errors on negative `s`.
    pub fn eval(&self, _r: f64, s: f64) -> Result<f64, RateError> {
        if s < 0.0 || s.is_nan() {
            return Err(RateError::NegativeArgument(s));
        }
        Ok(self.value(s))
    }

    /// Unchecked evaluation for `s >= 0`.
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        self.offset + self.terms.iter().map(|t| t.eval(s)).sum::<f64>()
    }

    /// Strictly increasing in `s` iff some coefficient is positive.
    pub fn is_strictly_increasing(&self) -> bool {
        self.terms.iter().any(|t| t.coef > 0.0)
    }

    /// Class-FK∞ in the second argument: zero at `s = 0`, strictly
    /// increasing and unbounded.
    pub fn is_class_fk_infinity(&self) -> bool {
        self.offset == 0.0 && self.is_strictly_increasing()
    }

    /// Sum of several rate functions.
    pub fn sum<'a>(rates: impl IntoIterator<Item = &'a RateFunction>) -> RateFunction {
        let mut terms = Vec::new();
        let mut offset = 0.0;
        for r in rates {
            terms.extend_from_slice(&r.terms);
            offset += r.offset;
        }
        RateFunction { terms, offset }
    }

    /// Scales every coefficient and the offset by `k >= 0`.
    pub fn scaled(&self, k: f64) -> Result<RateFunction, RateError> {
        RateFunction::new(
            self.terms
                .iter()
                .map(|t| RateTerm {
                    coef: t.coef * k,
                    power: t.power,
                })
                .collect(),
            self.offset * k,
        )
    }

    /// Solves `ρ(t − s, s) = level` for `s` by bisection on `[0, s_max]`,
    /// doubling `s_max` until the level is bracketed.
    pub fn invert(&self, _t: f64, level: f64) -> Result<f64, RateError> {
        if !self.is_strictly_increasing() {
            return Err(RateError::Constant);
        }
        let floor = self.value(0.0);
        if !(level >= floor) {
            return Err(RateError::NotInvertible { level, floor });
        }
        if level == floor {
            return Ok(0.0);
        }
        let f = |s: f64| self.value(s) - level;
        let mut hi = 1.0;
        let mut doublings = 0;
        while f(hi) < 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > 2000 || !hi.is_finite() {
                return Err(RateError::NotInvertible { level, floor });
            }
        }
        let mut lo = 0.0;
        let mut best = hi;
        for _ in 0..INVERSION_MAX_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let v = f(mid);
            if v.abs() <= INVERSION_TOLERANCE {
                best = mid;
                break;
            }
            if v < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            best = if f(lo).abs() < f(hi).abs() { lo } else { hi };
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        Ok(best)
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            write!(f, "{}*s^{}", t.coef, t.power)?;
            first = false;
        }
        if self.offset != 0.0 || first {
            if !first {
                f.write_str(" + ")?;
            }
            write!(f, "{}", self.offset)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Signed power combinations

/// Real-coefficient combination `k + Σ aₚ·s^p` with powers merged.
///
/// Each power also tracks the magnitude of the contributions that were
/// summed into it, so that cancellation down to rounding noise can be told
/// apart from a genuinely nonzero coefficient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerCombination {
    coefs: BTreeMap<PowerKey, (f64, f64)>,
    constant: f64,
    constant_magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct PowerKey(f64);
impl Eq for PowerKey {}
impl Ord for PowerKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

const CANCELLATION_RTOL: f64 = 1e-12;

impl PowerCombination {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_constant(&mut self, k: f64) {
        self.constant += k;
        self.constant_magnitude += k.abs();
    }

    pub fn add_term(&mut self, coef: f64, power: f64) {
        let e = self.coefs.entry(PowerKey(power)).or_insert((0.0, 0.0));
        e.0 += coef;
        e.1 += coef.abs();
    }

    /// Adds `weight · ρ`.
    pub fn add_rate(&mut self, weight: f64, rate: &RateFunction) {
        for t in rate.terms() {
            self.add_term(weight * t.coef, t.power);
        }
        self.add_constant(weight * rate.offset());
    }

    fn clean(value: f64, magnitude: f64) -> f64 {
        if value.abs() <= CANCELLATION_RTOL * magnitude {
            0.0
        } else {
            value
        }
    }

    /// Coefficients per power in increasing power order, with rounding-level
    /// cancellation snapped to zero.
    pub fn coefficients(&self) -> Vec<(f64, f64)> {
        self.coefs
            .iter()
            .map(|(p, &(c, m))| (p.0, Self::clean(c, m)))
            .collect()
    }

    /// Coefficient on `s^power`, or zero.
    pub fn coefficient(&self, power: f64) -> f64 {
        self.coefs
            .get(&PowerKey(power))
            .map(|&(c, m)| Self::clean(c, m))
            .unwrap_or(0.0)
    }

    pub fn constant(&self) -> f64 {
        Self::clean(self.constant, self.constant_magnitude)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.constant + self.coefs.iter().map(|(p, &(c, _))| c * fast_pow(s, p.0)).sum::<f64>()
    }

    /// Supremum over `s ∈ [0, ∞)`.
    ///
    /// The sign structure settles the easy cases exactly: all coefficients
    /// nonpositive gives `sup = k` at `s = 0`, and a positive leading
    /// coefficient gives `+∞`. Otherwise the critical points are located as
    /// sign changes of `s·F'(s)` in `log s` and refined by bisection.
    pub fn supremum(&self) -> Supremum {
        let coefs: Vec<(f64, f64)> = self
            .coefficients()
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .collect();
        let k = self.constant();
        let f = |s: f64| k + coefs.iter().map(|&(p, c)| c * fast_pow(s, p)).sum::<f64>();
        if coefs.iter().all(|&(_, c)| c <= 0.0) {
            return Supremum { value: k, at: Some(0.0) };
        }
        let &(p_max, lead) = coefs.last().unwrap();
        if lead > 0.0 {
            return Supremum {
                value: f64::INFINITY,
                at: None,
            };
        }
        // g(u) = s·F'(s) at s = e^u
        let g = |u: f64| coefs.iter().map(|&(p, c)| p * c * (p * u).exp()).sum::<f64>();
        let p_min = coefs[0].0;
        let mut u_hi = 1.0f64;
        while (p_max * lead).abs() * (p_max * u_hi).exp()
            <= coefs[..coefs.len() - 1]
                .iter()
                .map(|&(p, c)| (p * c).abs() * (p * u_hi).exp())
                .sum::<f64>()
        {
            u_hi *= 2.0;
            if u_hi > 1e4 {
                break;
            }
        }
        let mut u_lo = -1.0f64;
        let lowest = (p_min * coefs[0].1).abs();
        while lowest * (p_min * u_lo).exp()
            <= coefs[1..]
                .iter()
                .map(|&(p, c)| (p * c).abs() * (p * u_lo).exp())
                .sum::<f64>()
        {
            u_lo *= 2.0;
            if u_lo < -1e4 {
                break;
            }
        }
        let mut best = Supremum { value: k, at: Some(0.0) };
        let consider = |s: f64, best: &mut Supremum| {
            let v = f(s);
            if v > best.value {
                *best = Supremum { value: v, at: Some(s) };
            }
        };
        const SCAN: usize = 4000;
        let du = (u_hi - u_lo) / SCAN as f64;
        let mut prev_u = u_lo;
        let mut prev_g = g(u_lo);
        consider(u_lo.exp(), &mut best);
        for i in 1..=SCAN {
            let u = u_lo + du * i as f64;
            let gu = g(u);
            consider(u.exp(), &mut best);
            if prev_g > 0.0 && gu <= 0.0 {
                let (mut a, mut b) = (prev_u, u);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if g(m) > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                consider((0.5 * (a + b)).exp(), &mut best);
            }
            prev_u = u;
            prev_g = gu;
        }
        best
    }
}

impl fmt::Display for PowerCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .coefficients()
            .into_iter()
            .map(|(p, c)| format!("{c:e}*s^{p}"))
            .collect();
        if self.constant() != 0.0 || parts.is_empty() {
            parts.insert(0, format!("{:e}", self.constant()));
        }
        f.write_str(&parts.join(" + "))
    }
}

/// Supremum of a function of `s` over `[0, ∞)`; `at == None` means the
/// function is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supremum {
    pub value: f64,
    pub at: Option<f64>,
}

// ---------------------------------------------------------------------------
// Decay-rate condition on the weighted rate combination

/// `|λ|` per mode and `ln μ` per admissible transition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionWeights {
    pub lambda: BTreeMap<usize, f64>,
    pub mu: BTreeMap<Edge, f64>,
}

impl From<&SwitchedFamily> for ConditionWeights {
    fn from(fam: &SwitchedFamily) -> Self {
        ConditionWeights {
            lambda: fam.subsystems().iter().map(|s| (s.index, s.lambda)).collect(),
            mu: fam.mu_map().clone(),
        }
    }
}

/// Outcome of checking
/// `−Σ|λⱼ|ρˢⱼ + Σ|λₖ|ρᵘₖ + Σ(ln μₘₙ)ρₘₙ ≤ c₁ − ρ` on `s ≥ 0`.
#[derive(Debug, Clone)]
pub struct ConditionC1Report {
    /// Left-hand side as a power combination in `s`.
    pub lhs: PowerCombination,
    /// `lhs + ρ − c₁`; the condition holds iff this is `≤ 0` everywhere.
    pub margin: PowerCombination,
    pub c1: f64,
    /// Exact (grid-free) supremum of the margin.
    pub supremum: Supremum,
    pub exact_pass: bool,
    /// `(s, lhs, c₁ − ρ)` at every grid point.
    pub grid: Vec<GridPoint>,
    pub grid_pass: bool,
    /// Largest `lhs − (c₁ − ρ)` seen on the grid.
    pub grid_worst_slack: f64,
    pub grid_worst_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub r: f64,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl ConditionC1Report {
    pub fn passed(&self) -> bool {
        self.exact_pass && self.grid_pass
    }
}

/// Tolerance on the margin of the decay-rate condition, relative to the
/// magnitude of the terms being compared.
pub const CONDITION_TOLERANCE: f64 = 1e-12;

/// Evaluates the weighted rate combination against `c₁ − ρ`, both
/// coefficient-wise and on the supplied `(r, s)` grid.
pub fn check_condition_c1(
    weights: &ConditionWeights,
    bounds: &RateBoundSet,
    rho: &RateFunction,
    c1: f64,
    grid: &[(f64, f64)],
) -> Result<ConditionC1Report, RateError> {
    let mut lhs = PowerCombination::new();
    let lambda = |mode: usize| -> Result<f64, RateError> {
        weights
            .lambda
            .get(&mode)
            .copied()
            .ok_or_else(|| RateError::Domain(format!("no decay rate for mode {mode}")))
    };
    for (&j, b) in &bounds.stable {
        lhs.add_rate(-lambda(j)?.abs(), &b.rate);
    }
    for (&k, b) in &bounds.unstable {
        lhs.add_rate(lambda(k)?.abs(), &b.rate);
    }
    for (&e, b) in &bounds.transitions {
        let mu = weights
            .mu
            .get(&e)
            .copied()
            .ok_or_else(|| RateError::Domain(format!("no mu for transition {}->{}", e.0, e.1)))?;
        lhs.add_rate(mu.ln(), &b.rate);
    }

    let mut margin = lhs.clone();
    margin.add_rate(1.0, rho);
    margin.add_constant(-c1);
    let supremum = margin.supremum();
    let exact_pass = supremum.value <= CONDITION_TOLERANCE * (1.0 + c1.abs());

    let mut points = Vec::with_capacity(grid.len());
    let mut grid_pass = true;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_s = 0.0;
    for &(r, s) in grid {
        let l = lhs_direct(weights, bounds, r, s)?;
        let rhs = c1 - rho.eval(r, s)?;
        let slack = l - rhs;
        let scale = 1.0 + l.abs() + rhs.abs();
        if slack > CONDITION_TOLERANCE * scale {
            grid_pass = false;
        }
        if slack > worst {
            worst = slack;
            worst_s = s;
        }
        points.push(GridPoint { r, s, lhs: l, rhs });
    }
    Ok(ConditionC1Report {
        lhs,
        margin,
        c1,
        supremum,
        exact_pass,
        grid: points,
        grid_pass,
        grid_worst_slack: worst,
        grid_worst_s: worst_s,
    })
}

/// Left-hand side evaluated term by term from the individual rates.
pub fn lhs_direct(
    weights: &ConditionWeights,
    bounds: &RateBoundSet,
    r: f64,
    s: f64,
) -> Result<f64, RateError> {
    let mut total = 0.0;
    for (j, b) in &bounds.stable {
        total -= weights.lambda[j].abs() * b.rate.eval(r, s)?;
    }
    for (k, b) in &bounds.unstable {
        total += weights.lambda[k].abs() * b.rate.eval(r, s)?;
    }
    for (e, b) in &bounds.transitions {
        total += weights.mu[e].ln() * b.rate.eval(r, s)?;
    }
    Ok(total)
}

/// `n` evenly spaced `s` values on `[0, s_max]` with `r = 0`.
pub fn uniform_grid(s_max: f64, n: usize) -> Vec<(f64, f64)> {
    if n == 1 {
        return vec![(0.0, 0.0)];
    }
    (0..n)
        .map(|i| (0.0, s_max * i as f64 / (n - 1) as f64))
        .collect()
}

// ---------------------------------------------------------------------------
// Summability series

#[derive(Debug, Clone)]
pub struct SummabilityReport {
    pub horizons: Vec<f64>,
    /// `Σ_{i=0}^{N(0,t)} exp(−ρ(τᵢ, t − τᵢ))` per horizon.
    pub sums: Vec<f64>,
    pub nondecreasing: bool,
    /// Running maximum stopped moving (by less than 1e-9 per step) over the
    /// last fifth of the horizons.
    pub summable: bool,
    /// Largest partial sum observed.
    pub c2: f64,
    /// Largest step of the running maximum over the last fifth.
    pub tail_change: f64,
}

pub const PLATEAU_TOLERANCE: f64 = 1e-9;

/// Partial sums of the summability series for a concrete signal.
pub fn summability_estimate(
    rho: &RateFunction,
    sig: &SwitchingSignal,
    horizons: &[f64],
) -> Result<SummabilityReport, RateError> {
    if rho.value(0.0) != 0.0 {
        return Err(RateError::Domain("rho(0,0) must be 0".into()));
    }
    let taus = sig.taus();
    let mut sums = Vec::with_capacity(horizons.len());
    for &t in horizons {
        if !(t > 0.0) {
            return Err(RateError::NegativeArgument(t));
        }
        sums.push(series_partial_sum(rho, taus, t));
    }
    let nondecreasing = sums.windows(2).all(|w| w[1] >= w[0]);
    let mut running = Vec::with_capacity(sums.len());
    let mut m = f64::NEG_INFINITY;
    for &s in &sums {
        m = m.max(s);
        running.push(m);
    }
    let tail_start = sums.len() - (sums.len() / 5).max(1).min(sums.len());
    let tail_change = running[tail_start.max(1).min(running.len())..]
        .iter()
        .zip(&running[tail_start.max(1) - 1..])
        .map(|(b, a)| b - a)
        .fold(0.0, f64::max);
    let c2 = m.max(0.0);
    Ok(SummabilityReport {
        horizons: horizons.to_vec(),
        summable: sums.len() >= 2 && tail_change < PLATEAU_TOLERANCE,
        sums,
        nondecreasing,
        c2,
        tail_change,
    })
}

/// `Σ_{τᵢ ≤ t} exp(−ρ(τᵢ, t − τᵢ))` with `τ₀ = 0` included.
pub fn series_partial_sum(rho: &RateFunction, taus: &[f64], t: f64) -> f64 {
    taus.iter()
        .take_while(|&&tau| tau <= t)
        .map(|&tau| (-rho.value(t - tau)).exp())
        .sum()
}

/// Geometric bound for `ρ(r,s) = k₁s + k₂` under equispaced switches with
/// gap `d`: `exp(−k₂)·(1 + N₀ + 1/(exp(k₁·d) − 1))`.
pub fn lemma_affine_bound(k1: f64, k2: f64, gap: f64, n0: f64) -> Result<f64, RateError> {
    if !(k1 > 0.0) || !(gap > 0.0) {
        return Err(RateError::Domain(format!(
            "affine bound needs k1 > 0 and gap > 0 (got k1={k1}, gap={gap})"
        )));
    }
    Ok((-k2).exp() * (1.0 + n0 + 1.0 / (k1 * gap).exp_m1()))
}

/// Integral-test bound for `ρ(r,s) = k₁s^{3/2} + k₂` under equispaced
/// switches with gap `d`: `exp(−k₂)·(1 + N₀ + ∫₀^∞ exp(−k₁d^{3/2}x^{3/2}) dx)`.
pub fn lemma_three_halves_bound(k1: f64, k2: f64, gap: f64, n0: f64) -> Result<f64, RateError> {
    if !(k1 > 0.0) || !(gap > 0.0) {
        return Err(RateError::Domain(format!(
            "three-halves bound needs k1 > 0 and gap > 0 (got k1={k1}, gap={gap})"
        )));
    }
    Ok((-k2).exp() * (1.0 + n0 + three_halves_integral(k1 * gap.powf(1.5))))
}

/// `∫₀^∞ exp(−a·x^{3/2}) dx` by adaptive Simpson quadrature.
pub fn three_halves_integral(a: f64) -> f64 {
    // exp(-745) underflows; past this point the integrand is zero in f64
    let x_max = (745.0 / a).powf(2.0 / 3.0);
    let f = |x: f64| (-a * x * x.sqrt()).exp();
    adaptive_simpson(&f, 0.0, x_max, 1e-12, 60)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
