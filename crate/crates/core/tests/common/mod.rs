//! Random instances and property checks shared by the acceptance runner and
//! the proptest suite. Every builder is a pure function of a `u64` seed.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switched_iss::expr::{BinaryOp, Expr, UnaryOp};
use switched_iss::ratefn::RateFunction;
use switched_iss::signal::{
    check_adt, check_signal_bounds, generate_adt_signal, generate_admissible_signal, generate_worst_case_signal,
    read_signal_csv, write_signal_csv, AdmissibleOptions, AdtOptions, ModeBound, RateBoundSet, SignalError,
    SwitchingSignal, WorstCaseOptions,
};

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

/// Up to 15 switches among modes 1..=3 with gaps in `[0.01, 2]`.
pub fn random_signal(seed: u64) -> SwitchingSignal {
    let mut r = rng(seed);
    let n = r.gen_range(0..=15);
    let mut taus = vec![0.0];
    let mut modes = vec![r.gen_range(1..=3usize)];
    for _ in 0..n {
        let gap: f64 = r.gen_range(0.01..2.0);
        taus.push(taus.last().unwrap() + gap);
        let prev = *modes.last().unwrap();
        let mut m = r.gen_range(1..=2usize);
        if m >= prev {
            m += 1;
        }
        modes.push(m);
    }
    SwitchingSignal::new(taus, modes).unwrap()
}

/// `0 ≤ s < u < t` spread over the signal's life and past its last switch.
pub fn random_times(seed: u64, sig: &SwitchingSignal) -> (f64, f64, f64) {
    let mut r = rng(seed ^ 0x5EED);
    let end = sig.taus().last().unwrap() + 1.0;
    let mut v = [r.gen_range(0.0..end), r.gen_range(0.0..end), r.gen_range(0.0..end)];
    v.sort_by(f64::total_cmp);
    if v[0] == v[1] || v[1] == v[2] {
        return (0.0, end / 2.0, end);
    }
    (v[0], v[1], v[2])
}

fn modes_of(sig: &SwitchingSignal) -> BTreeSet<usize> {
    sig.modes().iter().copied().collect()
}

/// Activation durations of all modes add up to the interval length.
pub fn partition_identity(seed: u64) -> Check {
    let sig = random_signal(seed);
    let (s, _, t) = random_times(seed, &sig);
    let total: f64 = modes_of(&sig)
        .iter()
        .map(|&m| sig.activation_duration(m, s, t).unwrap())
        .sum();
    if close(total, t - s, t) {
        Ok(())
    } else {
        Err(format!("seed {seed}: durations sum to {total}, interval length {}", t - s))
    }
}

/// The total switch count equals the sum of the per-transition counts.
pub fn count_identity(seed: u64) -> Check {
    let sig = random_signal(seed);
    let (_, _, t) = random_times(seed, &sig);
    let edges: BTreeSet<_> = sig.transitions().collect();
    let per_edge: usize = edges.iter().map(|&e| sig.switch_count(e, 0.0, t).unwrap()).sum();
    let total = sig.total_switches(0.0, t).unwrap();
    if per_edge == total {
        Ok(())
    } else {
        Err(format!("seed {seed}: total {total} but per-transition counts sum to {per_edge}"))
    }
}

/// Durations over `]s,u]` and `]u,t]` add up to the duration over `]s,t]`.
pub fn duration_additivity(seed: u64) -> Check {
    let sig = random_signal(seed);
    let (s, u, t) = random_times(seed, &sig);
    for m in modes_of(&sig) {
        let a = sig.activation_duration(m, s, u).unwrap();
        let b = sig.activation_duration(m, u, t).unwrap();
        let c = sig.activation_duration(m, s, t).unwrap();
        if !close(a + b, c, t) {
            return Err(format!("seed {seed}, mode {m}: {a} + {b} != {c}"));
        }
    }
    Ok(())
}

fn rate(r: &mut ChaCha8Rng, lo: f64, hi: f64, with_power: bool) -> RateFunction {
    let mut terms = vec![(r.gen_range(lo..hi), 1.0)];
    if with_power && r.gen_bool(0.5) {
        terms.push((r.gen_range(0.0..hi / 4.0), 1.5));
    }
    RateFunction::from_terms(&terms).unwrap()
}

/// Bounds for a stable mode 1 and an unstable mode 2 switching both ways.
pub fn random_bounds(seed: u64) -> RateBoundSet {
    let mut r = rng(seed);
    let stable = ModeBound::new(rate(&mut r, 0.05, 0.5, true), r.gen_range(0.01..1.0));
    let unstable = ModeBound::new(rate(&mut r, 0.05, 0.5, false), r.gen_range(0.05..2.0));
    let t12 = ModeBound::new(rate(&mut r, 0.2, 2.0, true), r.gen_range(1.0..2.0));
    let t21 = ModeBound::new(rate(&mut r, 0.2, 2.0, true), r.gen_range(1.0..2.0));
    RateBoundSet::new(
        [(1, stable)].into(),
        [(2, unstable)].into(),
        [((1, 2), t12), ((2, 1), t21)].into(),
    )
    .unwrap()
}

fn csv_round_trip(sig: &SwitchingSignal) -> Check {
    let mut a = Vec::new();
    write_signal_csv(sig, &mut a).map_err(|e| e.to_string())?;
    let back = read_signal_csv(a.as_slice()).map_err(|e| e.to_string())?;
    let mut b = Vec::new();
    write_signal_csv(&back, &mut b).map_err(|e| e.to_string())?;
    if back == *sig && a == b {
        Ok(())
    } else {
        Err("CSV round trip changed the signal".into())
    }
}

/// Outcome of one generator round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generated {
    Checked,
    /// The generator declined with an infeasibility error.
    Declined,
}

/// Every signal a generator returns passes the check it was generated
/// under and survives a CSV round trip.
pub fn generator_round_trip(seed: u64) -> Result<Generated, String> {
    let edges: BTreeSet<_> = [(1, 2), (2, 1)].into();
    let mut r = rng(seed ^ 0xAB);
    let horizon = r.gen_range(1.0..6.0);
    let h = 0.05;
    let outcome = match seed % 3 {
        0 => {
            let b = random_bounds(seed);
            generate_admissible_signal(
                &b,
                &edges,
                &AdmissibleOptions {
                    horizon,
                    grid_step: h,
                    mode_cycle: vec![1, 2],
                },
            )
            .map(|s| (s, check_signal_bounds_owned(&b, horizon, h)))
        }
        1 => {
            let tau_a = r.gen_range(0.2..2.0);
            let n0 = r.gen_range(0.0..3.0);
            let seeded = r.gen_bool(0.5).then(|| r.gen());
            let opts = AdtOptions {
                tau_a,
                n0,
                horizon,
                mode_cycle: vec![1, 2],
                seed: seeded,
                grid_step: h,
            };
            generate_adt_signal(&edges, &opts).map(|s| {
                let check: Box<dyn Fn(&SwitchingSignal) -> Check> = Box::new(move |s: &SwitchingSignal| {
                    let rep = check_adt(s, tau_a, n0, horizon, h).map_err(|e| e.to_string())?;
                    rep.violation.map_or(Ok(()), |v| Err(v.to_string()))
                });
                (s, check)
            })
        }
        _ => {
            // two stable modes and one count bound shared by both
            // directions, so the densest aggregate placement is admissible
            let mut rr = rng(seed);
            let lax = |rr: &mut ChaCha8Rng| ModeBound::new(RateFunction::linear(0.01).unwrap(), rr.gen_range(1.0..2.0));
            let count = ModeBound::new(rate(&mut rr, 0.2, 2.0, true), rr.gen_range(1.0..2.0));
            let b = RateBoundSet::new(
                [(1, lax(&mut rr)), (2, lax(&mut rr))].into(),
                Default::default(),
                [((1, 2), count.clone()), ((2, 1), count)].into(),
            )
            .unwrap();
            generate_worst_case_signal(
                &b,
                &edges,
                &WorstCaseOptions {
                    horizon,
                    mode_cycle: vec![1, 2],
                    extra_switches: Some(0),
                    grid_step: h,
                },
            )
            .map(|s| (s, check_signal_bounds_owned(&b, horizon, h)))
        }
    };
    match outcome {
        Ok((sig, check)) => {
            check(&sig).map_err(|e| format!("seed {seed}: generated signal fails its check: {e}"))?;
            csv_round_trip(&sig).map_err(|e| format!("seed {seed}: {e}"))?;
            Ok(Generated::Checked)
        }
        Err(SignalError::Infeasible(_)) => Ok(Generated::Declined),
        Err(e) => Err(format!("seed {seed}: generator error {e}")),
    }
}

fn check_signal_bounds_owned(b: &RateBoundSet, horizon: f64, h: f64) -> Box<dyn Fn(&SwitchingSignal) -> Check> {
    let b = b.clone();
    Box::new(move |s: &SwitchingSignal| {
        let rep = check_signal_bounds(s, &b, horizon, h).map_err(|e| e.to_string())?;
        rep.violation.map_or(Ok(()), |v| Err(v.to_string()))
    })
}

/// Random expression over `x1, x2` of bounded depth. With `smooth` the
/// tree avoids operations that are non-differentiable or partial.
pub fn random_expr(r: &mut ChaCha8Rng, depth: u32, smooth: bool) -> Expr {
    if depth == 0 || r.gen_bool(0.25) {
        return match r.gen_range(0..3) {
            0 => Expr::Const((r.gen_range(-4.0..4.0f64) * 8.0).round() / 8.0),
            1 => Expr::var("x1"),
            _ => Expr::var("x2"),
        };
    }
    let sub = |r: &mut ChaCha8Rng| Box::new(random_expr(r, depth - 1, smooth));
    let unary = if smooth {
        [UnaryOp::Neg, UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp].as_slice()
    } else {
        [
            UnaryOp::Neg,
            UnaryOp::Sin,
            UnaryOp::Cos,
            UnaryOp::Exp,
            UnaryOp::Ln,
            UnaryOp::Abs,
            UnaryOp::Sqrt,
            UnaryOp::Sign,
        ]
        .as_slice()
    };
    match r.gen_range(0..4) {
        0 => {
            let op = unary[r.gen_range(0..unary.len())];
            let arg = sub(r);
            // keep exp arguments small so finite differences stay meaningful
            if op == UnaryOp::Exp && smooth {
                Expr::Unary(op, Box::new(Expr::Unary(UnaryOp::Sin, arg)))
            } else {
                Expr::Unary(op, arg)
            }
        }
        1 => {
            let p = if smooth {
                [2.0, 3.0][r.gen_range(0..2)]
            } else {
                [0.5, 1.5, 2.0, 3.0][r.gen_range(0..4)]
            };
            Expr::Pow(sub(r), p)
        }
        2 if smooth => {
            // quotient with a denominator bounded away from zero
            let den = Expr::Binary(
                BinaryOp::Add,
                Box::new(Expr::Const(1.0)),
                Box::new(Expr::Pow(sub(r), 2.0)),
            );
            Expr::Binary(BinaryOp::Div, sub(r), Box::new(den))
        }
        _ => {
            let op = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div][r.gen_range(0..if smooth { 3 } else { 4 })];
            Expr::Binary(op, sub(r), sub(r))
        }
    }
}

fn eval_at(e: &Expr, x1: f64, x2: f64) -> Result<f64, String> {
    e.evaluate(&[("x1", x1), ("x2", x2)]).map_err(|e| e.to_string())
}

/// Printing and re-parsing preserves values, and printing is a fixed point.
pub fn parse_print_round_trip(seed: u64) -> Check {
    let mut r = rng(seed);
    let e = random_expr(&mut r, 4, false);
    let text = e.to_string();
    let back = Expr::parse(&text, &["x1", "x2"]).map_err(|err| format!("seed {seed}: `{text}` does not re-parse: {err}"))?;
    if back.to_string() != text {
        return Err(format!("seed {seed}: `{text}` prints back as `{back}`"));
    }
    for _ in 0..100 {
        let (x1, x2) = (r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
        match (eval_at(&e, x1, x2), eval_at(&back, x1, x2)) {
            (Ok(a), Ok(b)) if a.to_bits() == b.to_bits() || (a - b).abs() <= 1e-12 * a.abs().max(1.0) => {}
            (Err(_), Err(_)) => {}
            (a, b) => return Err(format!("seed {seed}: `{text}` at ({x1}, {x2}): {a:?} vs {b:?}")),
        }
    }
    Ok(())
}

/// Symbolic partial derivatives agree with Richardson-extrapolated central
/// differences. Plain central differences are too coarse for nested powers
/// such as `sin(x^9)`, whose third derivative reaches 1e10 on the sample box.
pub fn derivative_matches_finite_difference(seed: u64) -> Check {
    let mut r = rng(seed);
    let e = random_expr(&mut r, 3, true);
    let (x1, x2) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
    let h = 1e-5;
    for (var, ux1, ux2) in [("x1", 1.0, 0.0), ("x2", 0.0, 1.0)] {
        let d = eval_at(&e.differentiate(var), x1, x2)?;
        let central = |h: f64| -> Result<f64, String> {
            Ok((eval_at(&e, x1 + ux1 * h, x2 + ux2 * h)? - eval_at(&e, x1 - ux1 * h, x2 - ux2 * h)?) / (2.0 * h))
        };
        let fd = (4.0 * central(h / 2.0)? - central(h)?) / 3.0;
        let scale = d.abs().max(1.0) * eval_at(&e, x1, x2)?.abs().max(1.0);
        if (d - fd).abs() > 1e-5 * scale {
            return Err(format!("seed {seed}: d/d{var} of `{e}` at ({x1}, {x2}): symbolic {d}, difference {fd}"));
        }
    }
    Ok(())
}
