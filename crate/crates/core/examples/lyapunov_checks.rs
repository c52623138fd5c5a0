//! Sampled checks of the Lyapunov data of the bundled two-mode benchmark:
//! the sandwich bounds, the decay inequality and the comparability constants.
//!
//! Run with `cargo run --example lyapunov_checks`.

use switched_iss::cli::load_bundled;

fn main() {
    let cfg = load_bundled("example_sec4").unwrap();
    let fam = &cfg.family;
    let checks = &cfg.checks;
    let p = fam.partition_modes();
    println!("stable modes {:?}, unstable modes {:?}", p.stable, p.unstable);

    for mode in 1..=fam.num_modes() {
        let sandwich = fam
            .check_lyapunov_sandwich(mode, &checks.state_box, checks.samples, checks.seed)
            .unwrap();
        let decay = fam
            .check_lyapunov_decay(mode, &checks.state_box, &checks.input_box, checks.samples, checks.seed)
            .unwrap();
        println!(
            "mode {mode}: sandwich {} ({} violations), decay {} ({} violations, worst margin {:.4} at {:?})",
            if sandwich.passed() { "pass" } else { "fail" },
            sandwich.violations.len(),
            if decay.passed() { "pass" } else { "fail" },
            decay.violations.len(),
            decay.worst_margin,
            decay.worst_point,
        );
    }

    for edge in fam.edges() {
        let r = fam.check_mu_compatibility(edge, &checks.state_box, checks.samples, checks.seed).unwrap();
        println!("mu {}->{}: declared {}, sampled ratio {:.4}, {}", edge.0, edge.1, r.mu, r.mu_hat, r.pass);
    }

    let gain = fam.check_gain_candidate(10.0, 200);
    println!("gain candidate: {} {:?}", gain.pass, gain.problems);
}
