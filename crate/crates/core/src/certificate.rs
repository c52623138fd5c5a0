//! The cascade functions `ψ₁`, `ψ₂` along a concrete signal, assembly of
//! the ISS certificate from the rate conditions, and the average-dwell-time
//! embeddings.

use serde::Serialize;
use thiserror::Error;

use crate::expr::Expr;
use crate::family::{FamilyError, PowerBound, SwitchedFamily};
use crate::ratefn::{
    check_condition_c1, summability_estimate, uniform_grid, ConditionC1Report, ConditionWeights, RateError,
    RateFunction, SummabilityReport,
};
use crate::signal::{ModeBound, RateBoundSet, SignalError, SwitchingSignal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

type Result<T> = std::result::Result<T, CertificateError>;

/// `(mode, length)` of every holding interval up to `t`; the last one is
/// truncated at `t`.
fn segments(sig: &SwitchingSignal, t: f64) -> Vec<(usize, f64)> {
    let n = sig.switches_up_to(t);
    let taus = sig.taus();
    (0..=n)
        .map(|i| {
            let end = if i < n { taus[i + 1] } else { t };
            (sig.modes()[i], end - taus[i])
        })
        .collect()
}

fn require_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(CertificateError::Precondition(format!("need t > 0 (got {t})")))
    }
}

/// `ln ψ₁(t)` from holding times.
pub fn log_psi1(fam: &SwitchedFamily, sig: &SwitchingSignal, t: f64) -> Result<f64> {
    require_time(t)?;
    let segs = segments(sig, t);
    let mut e = 0.0;
    for (i, &(mode, len)) in segs.iter().enumerate() {
        e -= fam.lambda(mode)? * len;
        if i > 0 {
            e += fam.mu((segs[i - 1].0, mode))?.ln();
        }
    }
    Ok(e)
}

/// `ψ₁(t) = exp(−Σ λ_{σ(τᵢ)}·Sᵢ₊₁ + Σ ln μ)` over the switches in `]0, t]`.
pub fn compute_psi1(fam: &SwitchedFamily, sig: &SwitchingSignal, t: f64) -> Result<f64> {
    Ok(log_psi1(fam, sig, t)?.exp())
}

/// `ψ₁(t)` from activation durations and switch counts on `]0, t]`.
pub fn psi1_from_durations(fam: &SwitchedFamily, sig: &SwitchingSignal, t: f64) -> Result<f64> {
    require_time(t)?;
    sig.validate_against(fam)?;
    let p = fam.partition_modes();
    let mut e = 0.0;
    for &j in &p.stable {
        e -= fam.lambda(j)?.abs() * sig.activation_duration(j, 0.0, t)?;
    }
    for &k in &p.unstable {
        e += fam.lambda(k)?.abs() * sig.activation_duration(k, 0.0, t)?;
    }
    for (&edge, &mu) in fam.mu_map() {
        e += mu.ln() * sig.switch_count(edge, 0.0, t)? as f64;
    }
    Ok(e.exp())
}

/// `ψ₂(t)`: for every holding interval, `(1 − e^{−λS})/λ` weighted by the
/// decay and `μ` factors of everything after it. The open tail `]τ_N, t]`
/// has no downstream factor.
pub fn compute_psi2(fam: &SwitchedFamily, sig: &SwitchingSignal, t: f64) -> Result<f64> {
    require_time(t)?;
    let segs = segments(sig, t);
    let mut downstream: f64 = 0.0;
    let mut total = 0.0;
    for i in (0..segs.len()).rev() {
        let (mode, len) = segs[i];
        let lambda = fam.lambda(mode)?;
        total += downstream.exp() * (-(-lambda * len).exp_m1() / lambda);
        downstream -= lambda * len;
        if i > 0 {
            downstream += fam.mu((segs[i - 1].0, mode))?.ln();
        }
    }
    Ok(total)
}

/// `ψ₁(t)·V_{σ(0)}(x₀) + g·ψ₂(t)`, an upper bound on `V_{σ(t)}(x(t))` when
/// `g ≥ γ(‖v‖_{[0,t]})`.
pub fn lyapunov_cascade_bound(
    fam: &SwitchedFamily,
    sig: &SwitchingSignal,
    x0: &[f64],
    gain_value: f64,
    t: f64,
) -> Result<f64> {
    let v0 = fam
        .subsystem(sig.initial_mode())?
        .lyapunov_value(x0)
        .map_err(|e| CertificateError::Precondition(format!("V(x0): {e}")))?;
    Ok(compute_psi1(fam, sig, t)? * v0 + gain_value * compute_psi2(fam, sig, t)?)
}

// ---------------------------------------------------------------------------
// Certificate

/// What a certificate was issued for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Uniformity {
    pub rho: String,
    pub c1: f64,
    pub c2: f64,
    pub signals: usize,
    pub horizons: usize,
    pub bound_offsets: f64,
}

/// Envelope `α(‖x(t)‖) ≤ β(‖x₀‖, t) + χ(‖v‖)` with
/// `α = α̲`, `β(r,s) = ᾱ(r)·exp(c + c₁ − ρ(s))` and `χ(r) = γ(r)·ψ̄₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct IssCertificate {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub rho: RateFunction,
    pub psi2_bar: f64,
    pub alpha_lower: PowerBound,
    pub alpha_upper: PowerBound,
    pub gain: Expr,
    pub uniform_over: Uniformity,
}

impl IssCertificate {
    pub fn alpha(&self, r: f64) -> f64 {
        self.alpha_lower.eval(r)
    }

    pub fn beta(&self, r: f64, s: f64) -> f64 {
        self.alpha_upper.eval(r) * (self.c + self.c1 - self.rho.value(s)).exp()
    }

    pub fn chi(&self, r: f64) -> f64 {
        let g = self.gain.evaluate(&[("r", r)]).unwrap_or(f64::NAN);
        g * self.psi2_bar
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailedCondition {
    /// The weighted rate combination exceeds `c₁ − ρ`.
    DecayRate,
    /// The summability series did not settle for the signal at this index.
    Summability { signal: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refusal {
    pub failed: FailedCondition,
    pub witness: String,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Certified(Box<IssCertificate>),
    Refused(Refusal),
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub condition_c1: ConditionC1Report,
    pub summability: Vec<SummabilityReport>,
    pub verdict: Verdict,
}

impl Assembly {
    pub fn certificate(&self) -> Option<&IssCertificate> {
        match &self.verdict {
            Verdict::Certified(c) => Some(c),
            Verdict::Refused(_) => None,
        }
    }
}

/// Inputs that only steer the numerics of [`assemble_certificate`].
#[derive(Debug, Clone, Copy)]
pub struct AssemblyGrid<'a> {
    /// Horizons for the summability series and `ψ̄₂`.
    pub horizons: &'a [f64],
    /// `(r, s)` points for the grid side of the decay-rate check.
    pub grid: &'a [(f64, f64)],
}

/// Runs the decay-rate condition and the summability estimate and, when
/// both pass, builds the certificate.
pub fn assemble_certificate(
    fam: &SwitchedFamily,
    bounds: &RateBoundSet,
    rho: &RateFunction,
    c1: f64,
    numerics: AssemblyGrid<'_>,
    signals: &[SwitchingSignal],
) -> Result<Assembly> {
    if rho.value(0.0) != 0.0 {
        return Err(CertificateError::Precondition(format!(
            "rho(0,0) must be 0 (got {})",
            rho.value(0.0)
        )));
    }
    if numerics.horizons.is_empty() {
        return Err(CertificateError::Precondition("no horizons given".into()));
    }
    bounds.validate_against(fam)?;
    for s in signals {
        s.validate_against(fam)?;
    }
    let weights = ConditionWeights::from(fam);
    let condition_c1 = check_condition_c1(&weights, bounds, rho, c1, numerics.grid)?;
    let summability = signals
        .iter()
        .map(|s| summability_estimate(rho, s, numerics.horizons))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let refuse = |failed, witness| Verdict::Refused(Refusal { failed, witness });
    let verdict = if !condition_c1.passed() {
        let witness = match condition_c1.supremum.at {
            None => format!(
                "margin {} grows without bound; grid worst slack {:e} at s={}",
                condition_c1.margin, condition_c1.grid_worst_slack, condition_c1.grid_worst_s
            ),
            Some(s) => format!(
                "margin reaches {:e} at s={s}; grid worst slack {:e} at s={}",
                condition_c1.supremum.value, condition_c1.grid_worst_slack, condition_c1.grid_worst_s
            ),
        };
        refuse(FailedCondition::DecayRate, witness)
    } else if let Some((i, r)) = summability.iter().enumerate().find(|(_, r)| !r.summable) {
        refuse(
            FailedCondition::Summability { signal: i },
            format!(
                "running maximum of partial sums still moves by {:e} over the last horizons",
                r.tail_change
            ),
        )
    } else {
        let c = bounds.total_offset();
        let c2 = summability.iter().map(|r| r.c2).fold(0.0, f64::max);
        let psi2_bar = psi2_bar(fam, rho, c + c1, signals, numerics.horizons)?;
        Verdict::Certified(Box::new(IssCertificate {
            c,
            c1,
            c2,
            rho: rho.clone(),
            psi2_bar,
            alpha_lower: fam.alpha_lower(),
            alpha_upper: fam.alpha_upper(),
            gain: fam.gain_expr().clone(),
            uniform_over: Uniformity {
                rho: rho.to_string(),
                c1,
                c2,
                signals: signals.len(),
                horizons: numerics.horizons.len(),
                bound_offsets: c,
            },
        }))
    };
    Ok(Assembly {
        condition_c1,
        summability,
        verdict,
    })
}

/// Largest value over signals and horizons of
/// `Σ_{j stable} A(t)/|λⱼ| + Σ_{k unstable} B(t)/|λₖ|`, where
/// `A(t) = Σ_{i=0}^{N} exp(c' − ρ(t − τᵢ₊₁))` with `τ_{N+1} := t` and
/// `B(t) = Σ_{i=0}^{N} exp(c' − ρ(t − τᵢ))`.
pub fn psi2_bar(
    fam: &SwitchedFamily,
    rho: &RateFunction,
    c_total: f64,
    signals: &[SwitchingSignal],
    horizons: &[f64],
) -> Result<f64> {
    let p = fam.partition_modes();
    let inv_stable: f64 = p.stable.iter().map(|&j| 1.0 / fam.lambda(j).unwrap().abs()).sum();
    let inv_unstable: f64 = p.unstable.iter().map(|&k| 1.0 / fam.lambda(k).unwrap().abs()).sum();
    let mut best: f64 = 0.0;
    for sig in signals {
        for &t in horizons {
            require_time(t)?;
            let n = sig.switches_up_to(t);
            let taus = &sig.taus()[..=n];
            let term = |tau: f64| (c_total - rho.value(t - tau)).exp();
            let a: f64 = taus[1..].iter().map(|&tau| term(tau)).sum::<f64>() + term(t);
            let b: f64 = taus.iter().map(|&tau| term(tau)).sum();
            best = best.max(inv_stable * a + inv_unstable * b);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Average dwell time

/// Common decay rates and comparability constant of a uniform family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformRates {
    pub lambda_s: f64,
    /// `|λ|` of the unstable modes, if any.
    pub lambda_u: Option<f64>,
    pub mu: f64,
}

impl UniformRates {
    /// Reads uniform rates off `fam`; modes or transitions with differing
    /// values are rejected.
    pub fn from_family(fam: &SwitchedFamily) -> Result<Self> {
        let p = fam.partition_modes();
        let common = |vals: Vec<f64>, what: &str| -> Result<Option<f64>> {
            match vals.first() {
                None => Ok(None),
                Some(&v) if vals.iter().all(|&x| (x - v).abs() <= 1e-12 * v.abs()) => Ok(Some(v)),
                Some(_) => Err(CertificateError::Precondition(format!("{what} differ across the family"))),
            }
        };
        let lambda_s = common(p.stable.iter().map(|&j| fam.lambda(j).unwrap()).collect(), "stable rates")?
            .ok_or_else(|| CertificateError::Precondition("family has no stable mode".into()))?;
        let lambda_u = common(p.unstable.iter().map(|&k| fam.lambda(k).unwrap().abs()).collect(), "unstable rates")?;
        let mu = common(fam.mu_map().values().copied().collect(), "mu values")?.unwrap_or(1.0);
        Ok(UniformRates { lambda_s, lambda_u, mu })
    }
}

#[derive(Debug, Clone)]
pub struct AdtVerdict {
    /// `τ_a` must strictly exceed this.
    pub threshold: f64,
    pub holds: bool,
    /// Induced certificate rate, when the embedding holds.
    pub rho: Option<RateFunction>,
    /// Re-check of the decay-rate condition under the induced bounds.
    pub condition_c1: Option<ConditionC1Report>,
}

/// `ln μ / (λ_S(1−ρ̄) − λ_U ρ̄)` for `ρ̄ ∈ ]0, λ_S/(λ_S+λ_U)[`.
pub fn adt_mixed_threshold(lambda_s: f64, lambda_u: f64, mu: f64, rho_bar: f64) -> Result<f64> {
    let upper = lambda_s / (lambda_s + lambda_u);
    if !(rho_bar > 0.0 && rho_bar < upper) {
        return Err(CertificateError::Precondition(format!(
            "unstable fraction must lie in ]0, {upper}[ (got {rho_bar})"
        )));
    }
    Ok(mu.ln() / (lambda_s * (1.0 - rho_bar) - lambda_u * rho_bar))
}

fn share(rate_total: f64, parts: usize) -> Result<ModeBound> {
    Ok(ModeBound::new(RateFunction::linear(rate_total / parts as f64)?, 1.0))
}

fn recheck(fam: &SwitchedFamily, bounds: RateBoundSet, rho: &RateFunction) -> Result<ConditionC1Report> {
    Ok(check_condition_c1(
        &ConditionWeights::from(fam),
        &bounds,
        rho,
        0.0,
        &uniform_grid(100.0, 500),
    )?)
}

/// Average-dwell-time embedding for a family with stable and unstable
/// modes: the unstable modes may be active for a fraction `ρ̄` of time.
pub fn check_adt_mixed(fam: &SwitchedFamily, rho_bar: f64, tau_a: f64) -> Result<AdtVerdict> {
    let u = UniformRates::from_family(fam)?;
    let lambda_u = u
        .lambda_u
        .ok_or_else(|| CertificateError::Precondition("family has no unstable mode".into()))?;
    let threshold = adt_mixed_threshold(u.lambda_s, lambda_u, u.mu, rho_bar)?;
    if !(tau_a > 0.0) {
        return Err(CertificateError::Precondition(format!("tau_a must be > 0 (got {tau_a})")));
    }
    let holds = tau_a > threshold;
    if !holds {
        return Ok(AdtVerdict {
            threshold,
            holds,
            rho: None,
            condition_c1: None,
        });
    }
    let p = fam.partition_modes();
    let edges = fam.edges();
    let bounds = RateBoundSet::new(
        p.stable
            .iter()
            .map(|&j| Ok((j, share(1.0 - rho_bar, p.stable.len())?)))
            .collect::<Result<_>>()?,
        p.unstable
            .iter()
            .map(|&k| Ok((k, share(rho_bar, p.unstable.len())?)))
            .collect::<Result<_>>()?,
        edges
            .iter()
            .map(|&e| Ok((e, share(1.0 / tau_a, edges.len())?)))
            .collect::<Result<_>>()?,
    )?;
    let slope = u.lambda_s * (1.0 - rho_bar) - lambda_u * rho_bar - u.mu.ln() / tau_a;
    let rho = RateFunction::linear(slope)?;
    let report = recheck(fam, bounds, &rho)?;
    Ok(AdtVerdict {
        threshold,
        holds,
        rho: Some(rho),
        condition_c1: Some(report),
    })
}

/// Average-dwell-time embedding for a family whose modes are all stable:
/// holds iff `τ_a > ln μ / λ₀`.
pub fn check_adt_all_iss(fam: &SwitchedFamily, tau_a: f64) -> Result<AdtVerdict> {
    let p = fam.partition_modes();
    if !p.unstable.is_empty() {
        return Err(CertificateError::Precondition("family has unstable modes".into()));
    }
    if !(tau_a > 0.0) {
        return Err(CertificateError::Precondition(format!("tau_a must be > 0 (got {tau_a})")));
    }
    let u = UniformRates::from_family(fam)?;
    let threshold = u.mu.ln() / u.lambda_s;
    let holds = tau_a > threshold;
    if !holds {
        return Ok(AdtVerdict {
            threshold,
            holds,
            rho: None,
            condition_c1: None,
        });
    }
    let edges = fam.edges();
    let bounds = RateBoundSet::new(
        p.stable
            .iter()
            .map(|&j| Ok((j, share(1.0, p.stable.len())?)))
            .collect::<Result<_>>()?,
        Default::default(),
        edges
            .iter()
            .map(|&e| Ok((e, share(1.0 / tau_a, edges.len())?)))
            .collect::<Result<_>>()?,
    )?;
    let rho = RateFunction::linear(u.lambda_s - u.mu.ln() / tau_a)?;
    let report = recheck(fam, bounds, &rho)?;
    Ok(AdtVerdict {
        threshold,
        holds,
        rho: Some(rho),
        condition_c1: Some(report),
    })
}
