//! Switch-aligned RK4 integration of the two-mode benchmark, a seeded batch,
//! and the envelope check against a certificate for the scalar system.
//!
//! Run with `cargo run --release --example batch_simulation`.

use switched_iss::cli::{check_with_signal, load_bundled};
use switched_iss::sim::{batch_map, batch_simulate, check_envelope, integrate, BatchSpec};

fn main() {
    let cfg = load_bundled("example_sec4").unwrap();
    let sig = cfg.resolve_signal().unwrap();
    let sim = cfg.simulation.as_ref().unwrap();

    let traj = integrate(&cfg.family, &sig, &sim.input, &[3.0, -2.0], 10.0, 1e-3).unwrap();
    println!("one run: {} grid points, final state {:?}", traj.len(), traj.final_state());

    let spec = BatchSpec {
        family: &cfg.family,
        signal: &sig,
        input: &sim.input,
        initial_box: &sim.initial_box,
        n_runs: 8,
        seed: sim.seed,
        t_end: sim.t_end,
        dt: sim.dt,
    };
    for s in batch_simulate(spec).unwrap() {
        println!(
            "run {}: |x0| = {:8.2}, sup |x| = {:8.2}, final |x| = {:.4}",
            s.run, s.initial_norm, s.sup_norm, s.final_norm
        );
    }

    let scalar = load_bundled("scalar_linear").unwrap();
    let scalar_sig = scalar.resolve_signal().unwrap();
    let cert = check_with_signal(&scalar, &scalar_sig).unwrap().certificate.unwrap();
    let ssim = scalar.simulation.as_ref().unwrap();
    let spec = BatchSpec {
        family: &scalar.family,
        signal: &scalar_sig,
        input: &ssim.input,
        initial_box: &ssim.initial_box,
        n_runs: ssim.n_runs,
        seed: ssim.seed,
        t_end: ssim.t_end,
        dt: ssim.dt,
    };
    let reports = batch_map(spec, |_, t| check_envelope(t, &cert, t.input_sup())).unwrap();
    let violations: usize = reports.iter().map(|r| r.violations.len()).sum();
    println!("scalar envelope: {} runs, {violations} violations", reports.len());
}
