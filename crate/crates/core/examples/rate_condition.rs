//! The decay-rate condition on rate-function bounds, checked exactly on the
//! coefficients and on a grid, plus the closed-form summability bounds for
//! equispaced switching.
//!
//! Run with `cargo run --example rate_condition`.

use switched_iss::cli::load_bundled;
use switched_iss::ratefn::{
    check_condition_c1, lemma_affine_bound, lemma_three_halves_bound, series_partial_sum, uniform_grid,
    ConditionWeights, RateFunction,
};
use switched_iss::signal::SwitchingSignal;

fn main() {
    let cfg = load_bundled("example_sec4").unwrap();
    let bounds = cfg.bounds.as_ref().unwrap();
    let weights = ConditionWeights::from(&cfg.family);
    let grid = uniform_grid(100.0, 500);

    for rho in [RateFunction::from_terms(&[(1e-5, 1.5)]).unwrap(), RateFunction::linear(0.01).unwrap()] {
        let r = check_condition_c1(&weights, bounds, &rho, 0.0, &grid).unwrap();
        println!("rho = {rho}");
        println!("  lhs    = {}", r.lhs);
        println!("  margin = {}", r.margin);
        println!(
            "  exact {} (sup {:e} at {:?}), grid {} (worst slack {:e} at s={})",
            r.exact_pass, r.supremum.value, r.supremum.at, r.grid_pass, r.grid_worst_slack, r.grid_worst_s
        );
    }

    // partial sums under equispaced switches against the closed-form bounds
    let d = 0.5;
    let sig = SwitchingSignal::equispaced(d, 200.0, &[1, 2]).unwrap();
    let linear = RateFunction::linear(1.0).unwrap();
    let three_halves = RateFunction::from_terms(&[(1.0, 1.5)]).unwrap();
    println!(
        "linear:       sum at t=200 {:.6}, bound {:.6}",
        series_partial_sum(&linear, sig.taus(), 200.0),
        lemma_affine_bound(1.0, 0.0, d, 1.0).unwrap()
    );
    println!(
        "three-halves: sum at t=200 {:.6}, bound {:.6}",
        series_partial_sum(&three_halves, sig.taus(), 200.0),
        lemma_three_halves_bound(1.0, 0.0, d, 1.0).unwrap()
    );
}
