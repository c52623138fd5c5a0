use switched_iss::cli::{check_with_signal, load_bundled};
use switched_iss::sim::{batch_map, check_envelope, BatchSpec, EnvelopeReport};

fn scalar_reports(shrink: f64) -> Vec<EnvelopeReport> {
    let cfg = load_bundled("scalar_linear").unwrap();
    let sig = cfg.resolve_signal().unwrap();
    let mut cert = check_with_signal(&cfg, &sig).unwrap().certificate.unwrap();
    cert.c -= shrink;
    let sim = cfg.simulation.as_ref().unwrap();
    let spec = BatchSpec {
        family: &cfg.family,
        signal: &sig,
        input: &sim.input,
        initial_box: &sim.initial_box,
        n_runs: 5,
        seed: sim.seed,
        t_end: 3.0,
        dt: 1e-2,
    };
    batch_map(spec, |_, traj| check_envelope(traj, &cert, traj.input_sup())).unwrap()
}

#[test]
fn certified_envelope_holds() {
    assert!(scalar_reports(0.0).iter().all(EnvelopeReport::passed));
}

#[test]
fn shrunken_envelope_is_caught() {
    // β scaled down by e^10 no longer covers α(|x0|) at t = 0
    let reports = scalar_reports(10.0);
    assert!(reports.iter().all(|r| !r.passed()));
    assert!(reports.iter().all(|r| r.violations[0].t == 0.0));
}
