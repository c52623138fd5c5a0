//! Assembling an ISS certificate for the scalar system `x' = -x + v` and
//! evaluating the envelope functions it provides.
//!
//! Run with `cargo run --example certificate`.

use switched_iss::certificate::{assemble_certificate, compute_psi1, compute_psi2, AssemblyGrid, Verdict};
use switched_iss::cli::load_bundled;
use switched_iss::ratefn::uniform_grid;

fn main() {
    let cfg = load_bundled("scalar_linear").unwrap();
    let sig = cfg.resolve_signal().unwrap();
    let settings = cfg.certificate.as_ref().unwrap();
    let horizons = cfg.horizons();
    let asm = assemble_certificate(
        &cfg.family,
        cfg.bounds.as_ref().unwrap(),
        &settings.rho,
        settings.c1,
        AssemblyGrid {
            horizons: &horizons,
            grid: &uniform_grid(settings.condition_s_max, settings.condition_points),
        },
        std::slice::from_ref(&sig),
    )
    .unwrap();

    let cert = match &asm.verdict {
        Verdict::Certified(c) => c,
        Verdict::Refused(r) => panic!("refused: {:?} ({})", r.failed, r.witness),
    };
    println!("c = {}, c1 = {}, c2 = {:.4}, psi2_bar = {:.4}", cert.c, cert.c1, cert.c2, cert.psi2_bar);
    for t in [0.0, 1.0, 5.0] {
        println!("beta(2, {t}) = {:.5}", cert.beta(2.0, t));
    }
    println!("chi(1) = {:.5}", cert.chi(1.0));

    let t = 3.0;
    println!(
        "psi1({t}) = {:.6}, psi2({t}) = {:.6}",
        compute_psi1(&cfg.family, &sig, t).unwrap(),
        compute_psi2(&cfg.family, &sig, t).unwrap()
    );
}
