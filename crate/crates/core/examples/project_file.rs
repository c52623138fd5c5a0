//! Driving the command workflows from an inline project file.
//!
//! Run with `cargo run --example project_file`. Reports land in the system
//! temporary directory.

use std::path::Path;

use switched_iss::cli::{cmd_check, cmd_generate, cmd_simulate, parse_config, RunOptions};

const PROJECT: &str = r#"{
  "name": "damped_pair",
  "family": {
    "state_dim": 2,
    "input_dim": 1,
    "modes": [
      { "field": ["-x1 + 0.5*x2", "-x2 + v1"], "lyapunov": "(x1^2 + x2^2)/2", "lambda": 0.5 },
      { "field": ["-2*x1", "x1 - 2*x2 + v1"], "lyapunov": "(x1^2 + x2^2)/2", "lambda": 1 }
    ],
    "mu": [{ "from": 1, "to": 2, "mu": 1 }, { "from": 2, "to": 1, "mu": 1 }],
    "alpha_lower": { "a": 0.5, "p": 2 },
    "alpha_upper": { "a": 0.5, "p": 2 },
    "gain": "r^2"
  },
  "bounds": {
    "stable": [
      { "mode": 1, "rate": { "terms": [{ "coef": 0.3, "power": 1 }] }, "offset": 1 },
      { "mode": 2, "rate": { "terms": [{ "coef": 0.3, "power": 1 }] }, "offset": 1 }
    ],
    "transitions": [
      { "from": 1, "to": 2, "rate": { "terms": [{ "coef": 0.5, "power": 1 }] }, "offset": 1 },
      { "from": 2, "to": 1, "rate": { "terms": [{ "coef": 0.5, "power": 1 }] }, "offset": 1 }
    ]
  },
  "certificate": { "rho": { "terms": [{ "coef": 0.3, "power": 1 }] }, "c1": 0 },
  "signal": { "kind": "admissible", "horizon": 100, "grid_step": 0.05, "mode_cycle": [1, 2] },
  "simulation": {
    "inputs": ["sin(t)"],
    "t_end": 20,
    "initial_box": { "lower": [-5, -5], "upper": [5, 5] },
    "n_runs": 10,
    "seed": 3,
    "summary_only": true
  }
}"#;

fn main() {
    let cfg = parse_config(PROJECT, Path::new(".")).unwrap();
    let out = std::env::temp_dir().join("switched-iss-project-example");
    let opts = RunOptions::new(&out);

    for (name, outcome) in [
        ("check", cmd_check(&cfg, &opts)),
        ("generate", cmd_generate(&cfg, &opts)),
        ("simulate", cmd_simulate(&cfg, &opts)),
    ] {
        let o = outcome.unwrap();
        println!("== {name}: exit {}", o.status.code());
        for (k, v) in o.report.entries() {
            if ["verdict", "certificate_c", "certificate_psi2_bar", "switches", "signal_bounds", "envelope", "cascade"]
                .contains(&k.as_str())
            {
                println!("   {k}: {v}");
            }
        }
    }
    println!("artifacts in {}", out.display());
}
