mod common;

use proptest::prelude::*;

use switched_iss::certificate::{
    assemble_certificate, lyapunov_cascade_bound, AssemblyGrid, IssCertificate, Uniformity,
};
use switched_iss::expr::Expr;
use switched_iss::family::{partition_by_rate, PowerBound, SampleBox, SubsystemSpec, SwitchedFamily};
use switched_iss::ratefn::{
    check_condition_c1, lemma_affine_bound, series_partial_sum, uniform_grid, ConditionWeights, RateFunction,
};
use switched_iss::signal::SwitchingSignal;
use switched_iss::sim::{batch_simulate, integrate, BatchSpec, InputSignal};

fn seeded() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

fn family(lambdas: &[f64], lyapunov: &[&str], mu: f64) -> SwitchedFamily {
    let specs = lambdas
        .iter()
        .zip(lyapunov)
        .map(|(&lambda, v)| SubsystemSpec {
            field: vec![
                Expr::parse("-x1 + sin(x2) + v1", &["x1", "x2", "v1"]).unwrap(),
                Expr::parse("-x2 + 0.5*x1", &["x1", "x2", "v1"]).unwrap(),
            ],
            lyapunov: Expr::parse(v, &["x1", "x2"]).unwrap(),
            lambda,
        })
        .collect();
    let n = lambdas.len();
    let edges = (1..=n)
        .flat_map(|i| (1..=n).filter(move |&j| j != i).map(move |j| ((i, j), mu)))
        .collect();
    SwitchedFamily::new(
        2,
        1,
        specs,
        edges,
        PowerBound::new(0.5, 2.0),
        PowerBound::new(1.0, 2.0),
        Expr::parse("r^2", &["r"]).unwrap(),
    )
    .unwrap()
}

fn rate(k1: f64, k15: f64) -> RateFunction {
    RateFunction::from_terms(&[(k1, 1.0), (k15, 1.5)]).unwrap()
}

proptest! {
    #![proptest_config(seeded())]

    #[test]
    fn durations_partition_the_interval(seed in any::<u64>()) {
        let r = common::partition_identity(seed);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn switch_counts_add_up(seed in any::<u64>()) {
        let r = common::count_identity(seed);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn durations_are_additive(seed in any::<u64>()) {
        let r = common::duration_additivity(seed);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn generated_signals_pass_their_checks(seed in any::<u64>()) {
        let r = common::generator_round_trip(seed);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn printing_round_trips(seed in any::<u64>()) {
        let r = common::parse_print_round_trip(seed);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn derivatives_match_differences(seed in any::<u64>()) {
        let r = common::derivative_matches_finite_difference(seed);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn evaluation_is_deterministic(seed in any::<u64>(), x1 in -3.0..3.0f64, x2 in -3.0..3.0f64) {
        let e = common::random_expr(&mut common::rng(seed), 4, false);
        let a = e.evaluate(&[("x1", x1), ("x2", x2)]).map(f64::to_bits).map_err(|e| e.to_string());
        let b = e.evaluate(&[("x1", x1), ("x2", x2)]).map(f64::to_bits).map_err(|e| e.to_string());
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rate_partition_is_a_disjoint_cover(lambdas in prop::collection::vec(
        prop_oneof![-5.0..-0.01f64, 0.01..5.0f64], 1..8)) {
        let p = partition_by_rate(&lambdas).unwrap();
        prop_assert!(p.stable.is_disjoint(&p.unstable));
        let all: Vec<usize> = p.stable.union(&p.unstable).copied().collect();
        prop_assert_eq!(all, (1..=lambdas.len()).collect::<Vec<_>>());
        for (&m, &l) in p.stable.iter().map(|m| (m, &lambdas[m - 1])) {
            prop_assert!(l > 0.0, "mode {} with rate {} labelled stable", m, l);
        }
    }

    #[test]
    fn identical_lyapunov_functions_give_unit_ratio(a in 0.1..3.0f64, b in 0.1..3.0f64, seed in any::<u64>()) {
        let v = format!("{a}*x1^2 + {b}*x2^2");
        let fam = family(&[1.0, 2.0], &[&v, &v], 1.0);
        let bx = SampleBox::cube(2, -5.0, 5.0).unwrap();
        let r = fam.check_mu_compatibility((1, 2), &bx, 200, seed).unwrap();
        prop_assert_eq!(r.mu_hat, 1.0);
    }

    #[test]
    fn sampled_checks_are_reproducible(seed in any::<u64>()) {
        let fam = family(&[1.0, -0.5], &["0.5*x1^2 + x2^2", "x1^2 + 0.5*x2^2"], 2.0);
        let sb = SampleBox::cube(2, -4.0, 4.0).unwrap();
        let ib = SampleBox::cube(1, -1.0, 1.0).unwrap();
        for mode in 1..=2 {
            prop_assert_eq!(
                fam.check_lyapunov_decay(mode, &sb, &ib, 300, seed).unwrap(),
                fam.check_lyapunov_decay(mode, &sb, &ib, 300, seed).unwrap()
            );
            prop_assert_eq!(
                fam.check_lyapunov_sandwich(mode, &sb, 300, seed).unwrap(),
                fam.check_lyapunov_sandwich(mode, &sb, 300, seed).unwrap()
            );
        }
        prop_assert_eq!(
            fam.check_mu_compatibility((1, 2), &sb, 300, seed).unwrap(),
            fam.check_mu_compatibility((1, 2), &sb, 300, seed).unwrap()
        );
    }

    #[test]
    fn rates_increase_strictly(k1 in 0.0..3.0f64, k15 in 0.0..3.0f64, s1 in 0.0..50.0f64, gap in 1e-3..50.0f64) {
        prop_assume!(k1 > 0.0 || k15 > 0.0);
        let rho = rate(k1, k15);
        prop_assert!(rho.value(s1) < rho.value(s1 + gap));
    }

    #[test]
    fn inversion_undoes_evaluation(k1 in 0.01..3.0f64, k15 in 0.0..3.0f64, offset in 0.0..2.0f64, s in 0.0..200.0f64) {
        let rho = rate(k1, k15).with_offset(offset).unwrap();
        let back = rho.invert(0.0, rho.value(s)).unwrap();
        prop_assert!((back - s).abs() <= 1e-9 * s.max(1.0), "s={} came back as {}", s, back);
    }

    #[test]
    fn coefficient_and_grid_checks_agree(
        ks in 0.01..0.5f64, ku in 0.01..0.5f64, kt in 0.0..0.5f64, kt15 in 0.0..0.05f64,
        rho1 in 0.0..0.3f64, lu in 0.5..3.0f64, mu in 1.0..4.0f64,
    ) {
        use switched_iss::signal::{ModeBound, RateBoundSet};
        let fam = family(&[1.5, -lu], &["x1^2 + x2^2", "x1^2 + x2^2"], mu);
        let bound = |r: RateFunction| ModeBound::new(r, 1.0);
        let bounds = RateBoundSet::new(
            [(1, bound(rate(ks, 0.0)))].into(),
            [(2, bound(rate(ku, 0.0)))].into(),
            [((1, 2), bound(rate(kt.max(1e-3), kt15))), ((2, 1), bound(rate(kt.max(1e-3), kt15)))].into(),
        ).unwrap();
        let rho = rate(rho1.max(1e-3), 0.0);
        let w = ConditionWeights::from(&fam);
        // the margin is a·s + b·s^1.5; size the grid to contain any sign change
        let first = check_condition_c1(&w, &bounds, &rho, 0.0, &uniform_grid(1.0, 2)).unwrap();
        let (a, b) = (first.margin.coefficient(1.0), first.margin.coefficient(1.5));
        let cross = if a * b < 0.0 { (a / b).powi(2) } else { 1.0 };
        let grid = uniform_grid(4.0 * cross.max(1.0), 400);
        let r = check_condition_c1(&w, &bounds, &rho, 0.0, &grid).unwrap();
        prop_assert_eq!(r.exact_pass, r.grid_pass, "margin {}", r.margin);
    }

    #[test]
    fn partial_sums_grow_with_retained_terms(seed in any::<u64>(), k1 in 0.01..2.0f64, k2 in 0.0..2.0f64) {
        let sig = common::random_signal(seed);
        let (_, _, t) = common::random_times(seed, &sig);
        let rho = rate(k1, 0.0).with_offset(k2).unwrap();
        let mut acc = 0.0;
        for &tau in sig.taus().iter().take_while(|&&tau| tau <= t) {
            let next = acc + (-rho.value(t - tau)).exp();
            prop_assert!(next >= acc);
            acc = next;
        }
        prop_assert!((acc - series_partial_sum(&rho, sig.taus(), t)).abs() <= 1e-12 * acc.max(1.0));
    }

    #[test]
    fn psi1_forms_agree(seed in any::<u64>()) {
        use rand::Rng;
        let mut r = common::rng(seed ^ 0x51);
        let lambdas: Vec<f64> = (0..3).map(|_| {
            let l: f64 = r.gen_range(-1.0..2.0);
            if l.abs() < 0.05 { 0.7 } else { l }
        }).collect();
        let fam = family(&lambdas, &["x1^2 + x2^2"; 3], r.gen_range(0.5..4.0));
        let sig = common::random_signal(seed);
        let (_, _, t) = common::random_times(seed, &sig);
        let a = switched_iss::certificate::compute_psi1(&fam, &sig, t).unwrap();
        let b = switched_iss::certificate::psi1_from_durations(&fam, &sig, t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn unforced_bound_decreases(lambda in 0.1..3.0f64, x1 in -5.0..5.0f64, x2 in 0.1..5.0f64, t in 0.01..20.0f64, dt in 1e-3..5.0f64) {
        let fam = family(&[lambda], &["x1^2 + x2^2"], 1.0);
        let sig = SwitchingSignal::constant(1);
        let a = lyapunov_cascade_bound(&fam, &sig, &[x1, x2], 0.0, t).unwrap();
        let b = lyapunov_cascade_bound(&fam, &sig, &[x1, x2], 0.0, t + dt).unwrap();
        prop_assert!(b < a, "{} then {}", a, b);
    }

    #[test]
    fn beta_starts_at_upper_bound_and_vanishes(
        a in 0.1..5.0f64, p in 1.0..3.0f64, c in 0.0..5.0f64, c1 in 0.0..2.0f64,
        k in 0.01..2.0f64, r in 0.0..100.0f64,
    ) {
        let rho = rate(k, 0.0);
        let cert = IssCertificate {
            c,
            c1,
            c2: 1.0,
            rho: rho.clone(),
            psi2_bar: 1.0,
            alpha_lower: PowerBound::new(a / 2.0, p),
            alpha_upper: PowerBound::new(a, p),
            gain: Expr::parse("r^2", &["r"]).unwrap(),
            uniform_over: Uniformity {
                rho: rho.to_string(),
                c1,
                c2: 1.0,
                signals: 1,
                horizons: 1,
                bound_offsets: c,
            },
        };
        prop_assert_eq!(cert.beta(r, 0.0), a * r.powf(p) * (c + c1).exp());
        prop_assert!(cert.beta(r, 1e6) <= cert.beta(r, 1e3));
        prop_assert!(cert.beta(r, 1e6) <= 1e-300);
    }

    #[test]
    fn refused_condition_never_certifies(seed in any::<u64>(), k in 0.01..2.0f64, c1 in 0.0..1.0f64) {
        let bounds = common::random_bounds(seed);
        let fam = family(&[1.0, -1.0], &["x1^2 + x2^2", "x1^2 + x2^2"], 2.0);
        let sig = SwitchingSignal::equispaced(1.0, 20.0, &[1, 2]).unwrap();
        let horizons: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
        let asm = assemble_certificate(
            &fam,
            &bounds,
            &rate(k, 0.0),
            c1,
            AssemblyGrid { horizons: &horizons, grid: &uniform_grid(50.0, 100) },
            &[sig],
        ).unwrap();
        if !asm.condition_c1.passed() {
            prop_assert!(asm.certificate().is_none());
        }
    }

    #[test]
    fn dwell_time_sums_stay_bounded(eps in 0.01..2.0f64, tau_a in 0.05..3.0f64, t_frac in 0.0..1.0f64) {
        let sig = SwitchingSignal::equispaced(tau_a, 200.0, &[1, 2]).unwrap();
        let rho = rate(eps, 0.0);
        let bound = lemma_affine_bound(eps, 0.0, tau_a, 1.0).unwrap();
        let t = 200.0 * t_frac + 1e-6;
        prop_assert!(series_partial_sum(&rho, sig.taus(), t) <= bound);
    }

    #[test]
    fn recorded_modes_follow_the_signal(seed in any::<u64>()) {
        let fam = family(&[1.0, 0.5, -0.3], &["x1^2 + x2^2"; 3], 1.5);
        let sig = common::random_signal(seed);
        let t_end = sig.taus().last().unwrap() + 0.5;
        let traj = integrate(&fam, &sig, &InputSignal::parse(&["1"]).unwrap(), &[0.3, -0.2], t_end, 0.01).unwrap();
        for (k, &t) in traj.times.iter().enumerate() {
            prop_assert_eq!(traj.modes[k], sig.mode_at(t));
        }
        for tau in &sig.taus()[1..] {
            prop_assert!(traj.times.contains(tau), "switch at {} is not a grid point", tau);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn batches_are_reproducible(seed in any::<u64>()) {
        let fam = family(&[1.0, 0.5], &["x1^2 + x2^2"; 2], 1.5);
        let sig = SwitchingSignal::equispaced(0.7, 5.0, &[1, 2]).unwrap();
        let input = InputSignal::parse(&["sin(t)"]).unwrap();
        let bx = SampleBox::cube(2, -10.0, 10.0).unwrap();
        let spec = BatchSpec {
            family: &fam,
            signal: &sig,
            input: &input,
            initial_box: &bx,
            n_runs: 6,
            seed,
            t_end: 5.0,
            dt: 0.01,
        };
        prop_assert_eq!(batch_simulate(spec).unwrap(), batch_simulate(spec).unwrap());
    }
}
