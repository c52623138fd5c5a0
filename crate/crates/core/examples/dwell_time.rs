//! Average dwell time as a special case of rate-function bounds: threshold
//! dwell times for all-stable and mixed families.
//!
//! Run with `cargo run --example dwell_time`.

use switched_iss::certificate::{check_adt_all_iss, check_adt_mixed};
use switched_iss::expr::Expr;
use switched_iss::family::{PowerBound, SubsystemSpec, SwitchedFamily};

fn scalar_family(lambdas: &[f64], mu: f64) -> SwitchedFamily {
    let specs = lambdas
        .iter()
        .map(|&lambda| SubsystemSpec {
            field: vec![Expr::parse("-x1 + v1", &["x1", "v1"]).unwrap()],
            lyapunov: Expr::parse("x1^2/2", &["x1"]).unwrap(),
            lambda,
        })
        .collect();
    SwitchedFamily::new(
        1,
        1,
        specs,
        [((1, 2), mu), ((2, 1), mu)].into(),
        PowerBound::new(0.5, 2.0),
        PowerBound::new(0.5, 2.0),
        Expr::parse("r^2", &["r"]).unwrap(),
    )
    .unwrap()
}

fn main() {
    let stable = scalar_family(&[1.0, 1.0], 3.0);
    for tau_a in [0.5, 1.0, 1.5] {
        let v = check_adt_all_iss(&stable, tau_a).unwrap();
        println!(
            "all stable, tau_a = {tau_a}: threshold {:.4}, holds {}, rate {}",
            v.threshold,
            v.holds,
            v.rho.map(|r| r.to_string()).unwrap_or_else(|| "-".into())
        );
    }

    let mixed = scalar_family(&[2.0, -1.0], 2.0);
    let rho_bar = 0.2;
    for tau_a in [0.3, 0.6, 1.2] {
        let v = check_adt_mixed(&mixed, rho_bar, tau_a).unwrap();
        let condition = v.condition_c1.as_ref().map(|c| c.passed());
        println!(
            "mixed, unstable share {rho_bar}, tau_a = {tau_a}: threshold {:.4}, holds {}, induced condition {:?}",
            v.threshold, v.holds, condition
        );
    }
}
