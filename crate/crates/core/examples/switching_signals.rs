//! Switching signals: durations and counts, the admissible, worst-case and
//! average-dwell-time generators, bound checks and the CSV format.
//!
//! Run with `cargo run --example switching_signals`.

use std::collections::BTreeSet;

use switched_iss::cli::load_bundled;
use switched_iss::signal::{
    check_adt, check_signal_bounds, generate_adt_signal, generate_admissible_signal, write_signal_csv,
    AdmissibleOptions, AdtOptions, SwitchingSignal,
};

fn main() {
    let sig = SwitchingSignal::new(vec![0.0, 1.0, 2.5, 3.0], vec![1, 2, 1, 2]).unwrap();
    for mode in [1, 2] {
        println!("mode {mode} active for {} on ]0, 4]", sig.activation_duration(mode, 0.0, 4.0).unwrap());
    }
    println!("1->2 switches on ]0, 4]: {}", sig.switch_count((1, 2), 0.0, 4.0).unwrap());

    let cfg = load_bundled("example_sec4").unwrap();
    let bounds = cfg.bounds.as_ref().unwrap();
    let edges = cfg.family.edges();
    let opts = AdmissibleOptions {
        horizon: 40.0,
        grid_step: 0.01,
        mode_cycle: vec![1, 2],
    };
    let adm = generate_admissible_signal(bounds, &edges, &opts).unwrap();
    let report = check_signal_bounds(&adm, bounds, 40.0, 0.01).unwrap();
    println!(
        "admissible signal: {} switches, {} intervals checked, passed {}",
        adm.num_switches(),
        report.intervals,
        report.passed()
    );
    let mut csv = Vec::new();
    write_signal_csv(&adm, &mut csv).unwrap();
    print!("{}", String::from_utf8_lossy(&csv).lines().take(5).collect::<Vec<_>>().join("\n"));
    println!("\n...");

    let two_way: BTreeSet<_> = [(1, 2), (2, 1)].into();
    let adt = AdtOptions {
        tau_a: 0.8,
        n0: 2.0,
        horizon: 10.0,
        mode_cycle: vec![1, 2],
        seed: Some(11),
        grid_step: 0.01,
    };
    let jittered = generate_adt_signal(&two_way, &adt).unwrap();
    let r = check_adt(&jittered, adt.tau_a, adt.n0, adt.horizon, adt.grid_step).unwrap();
    println!("ADT signal: switches at {:?}, check passed {}", &jittered.taus()[1..], r.passed());
}
