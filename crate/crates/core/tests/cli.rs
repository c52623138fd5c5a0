use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use switched_iss::cli::{bundled_config, load_bundled, load_config, parse_config, run, ConfigError, Report};
use switched_iss::signal::{check_signal_bounds, read_signal_csv};

fn scalar() -> Value {
    serde_json::from_str(bundled_config("scalar_linear").unwrap()).unwrap()
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let path = dir.join("project.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn exit_code(args: &[&str]) -> i32 {
    let mut argv = vec!["switched-iss"];
    argv.extend_from_slice(args);
    run(argv)
}

fn report(path: &Path) -> Report {
    Report::parse(&fs::read_to_string(path).unwrap())
}

fn issues(text: &str) -> Vec<String> {
    match parse_config(text, Path::new(".")) {
        Err(ConfigError::Invalid(v)) => v.iter().map(ToString::to_string).collect(),
        other => panic!("expected validation issues, got {other:?}"),
    }
}

#[test]
fn bundled_benchmark_loads_its_constants() {
    let cfg = load_bundled("example_sec4").unwrap();
    assert_eq!(cfg.family.lambda(1).unwrap(), 1.75);
    assert_eq!(cfg.family.lambda(2).unwrap(), -2.1667);
    assert_eq!(cfg.family.mu((1, 2)).unwrap(), 1.0);
    assert_eq!(cfg.family.mu((2, 1)).unwrap(), 2.0);
    let b = cfg.bounds.unwrap();
    assert_eq!(b.stable[&1].offset, 0.01);
    assert_eq!(b.unstable[&2].offset, 2.58);
}

#[test]
fn unknown_signal_mode_is_reported_with_its_path() {
    let mut cfg = scalar();
    cfg["signal"] = json!({ "kind": "inline", "taus": [0, 1, 2], "modes": [1, 1, 3] });
    let found = issues(&cfg.to_string());
    assert!(
        found.iter().any(|i| i.starts_with("signal.modes[2]") && i.contains("mode 3")),
        "{found:?}"
    );
}

#[test]
fn schema_errors_name_the_offending_key() {
    assert!(!issues("").is_empty());
    let mut cfg = scalar();
    cfg["simulation"]["t_final"] = json!(3);
    let found = issues(&cfg.to_string());
    assert!(found.iter().any(|i| i.starts_with("simulation") && i.contains("t_final")), "{found:?}");
    let mut cfg = scalar();
    cfg["family"]["modes"][0]["lambda"] = json!("fast");
    let found = issues(&cfg.to_string());
    assert!(found.iter().any(|i| i.contains("family.modes[0].lambda")), "{found:?}");
}

#[test]
fn broken_or_missing_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"name\": 3 ").unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(exit_code(&["check", "--config", bad.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(exit_code(&["check", "--config", "/nonexistent/x.json", "--out", out]), 2);
    assert_eq!(exit_code(&["simulate", "--out", out]), 2);
    assert_eq!(exit_code(&["frobnicate"]), 2);
    assert!(matches!(load_config(Path::new("/nonexistent/x.json")), Err(ConfigError::Io { .. })));
}

#[test]
fn scalar_family_is_certified() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(exit_code(&["check", "--config", "scalar_linear", "--out", out.to_str().unwrap()]), 0);
    let rep = report(&out.join("check_report.txt"));
    assert_eq!(rep.get("verdict"), Some("certified"));
    assert_eq!(rep.get("assumptions_verified"), Some("true"));
    assert_eq!(rep.get("exit_code"), Some("0"));
}

#[test]
fn benchmark_check_refuses_and_notes_the_claimed_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(exit_code(&["check", "--config", "example_sec4", "--out", out.to_str().unwrap()]), 1);
    let rep = report(&out.join("check_report.txt"));
    assert_eq!(rep.get("verdict"), Some("refused"));
    assert_eq!(rep.get("claimed_lhs_matches_recomputed"), Some("false"));
    assert!(rep.get("claimed_lhs_note").is_some());
    assert!(rep.get("witness").is_some());
}

#[test]
fn pinned_single_run_writes_one_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scalar();
    let sim = cfg["simulation"].as_object_mut().unwrap();
    sim.remove("initial_box");
    sim.insert("x0".into(), json!([3.0]));
    sim.insert("n_runs".into(), json!(1));
    sim.insert("summary_only".into(), json!(false));
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    assert_eq!(exit_code(&["simulate", "--config", &path, "--out", out.to_str().unwrap()]), 0);
    let files: Vec<_> = fs::read_dir(out.join("trajectories")).unwrap().collect();
    assert_eq!(files.len(), 1);
    let mut rd = csv::Reader::from_path(out.join("trajectories/run_000.csv")).unwrap();
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "mode", "x1", "v1", "normx"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10_001);
    assert_eq!(&rows[0][2], "3");
    let last: f64 = rows[rows.len() - 1][0].parse().unwrap();
    assert_eq!(last, 10.0);
    let rep = report(&out.join("simulate_report.txt"));
    assert_eq!(rep.get("certificate"), Some("issued"));
}

#[test]
fn unstable_family_diverges_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "name": "runaway",
        "family": {
            "state_dim": 1,
            "input_dim": 1,
            "modes": [{ "field": ["x1 + v1"], "lyapunov": "x1^2/2", "lambda": -2 }],
            "alpha_lower": { "a": 0.5, "p": 2 },
            "alpha_upper": { "a": 0.5, "p": 2 },
            "gain": "r^2"
        },
        "signal": { "kind": "no_switch", "mode": 1 },
        "simulation": {
            "inputs": ["0"],
            "t_end": 40,
            "dt": 0.01,
            "initial_box": { "lower": [0.5], "upper": [1] },
            "n_runs": 3,
            "seed": 1,
            "summary_only": true
        }
    });
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(exit_code(&["simulate", "--config", &path, "--out", out]), 1);
    let summary = fs::read_to_string(Path::new(out).join("summary.csv")).unwrap();
    assert_eq!(summary.matches("diverged at").count(), 3);
    assert_eq!(exit_code(&["simulate", "--config", &path, "--out", out, "--allow-divergence"]), 0);
}

#[test]
fn seed_flag_overrides_the_project_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(exit_code(&["simulate", "--config", "scalar_linear", "--out", a.to_str().unwrap()]), 0);
    assert_eq!(
        exit_code(&["simulate", "--config", "scalar_linear", "--out", b.to_str().unwrap(), "--seed", "99"]),
        0
    );
    assert_eq!(report(&a.join("simulate_report.txt")).get("seed"), Some("7"));
    assert_eq!(report(&b.join("simulate_report.txt")).get("seed"), Some("99"));
    assert_ne!(
        fs::read_to_string(a.join("summary.csv")).unwrap(),
        fs::read_to_string(b.join("summary.csv")).unwrap()
    );
}

#[test]
fn generated_benchmark_signal_re_reads_and_meets_its_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(exit_code(&["generate", "--config", "example_sec4", "--out", out.to_str().unwrap()]), 0);
    let sig = read_signal_csv(fs::File::open(out.join("signal.csv")).unwrap()).unwrap();
    let cfg = load_bundled("example_sec4").unwrap();
    let rep = check_signal_bounds(&sig, cfg.bounds.as_ref().unwrap(), 40.0, 0.01).unwrap();
    assert!(rep.passed(), "{:?}", rep.violation);
    assert_eq!(sig, cfg.resolve_signal().unwrap());
}

#[test]
fn generate_supports_every_signal_source() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = load_two_mode();
    let sources = [
        json!({ "kind": "inline", "taus": [0, 0.5, 1.5], "modes": [1, 2, 1] }),
        json!({ "kind": "adt", "tau_a": 0.5, "n0": 2, "horizon": 5, "mode_cycle": [1, 2], "seed": 3 }),
        json!({ "kind": "adt", "tau_a": 0.5, "n0": 1, "horizon": 5, "mode_cycle": [1, 2] }),
        json!({ "kind": "worst_case", "horizon": 5, "mode_cycle": [1, 2], "extra_switches": 0 }),
        json!({ "kind": "admissible", "horizon": 5, "mode_cycle": [1, 2] }),
        json!({ "kind": "no_switch", "mode": 2 }),
    ];
    for (i, src) in sources.iter().enumerate() {
        base["signal"] = src.clone();
        let path = write_config(dir.path(), &base);
        let out = dir.path().join(format!("out{i}"));
        assert_eq!(exit_code(&["generate", "--config", &path, "--out", out.to_str().unwrap()]), 0, "{src}");
        let sig = read_signal_csv(fs::File::open(out.join("signal.csv")).unwrap()).unwrap();
        let rep = report(&out.join("generate_report.txt"));
        assert_eq!(rep.get("switches"), Some(sig.num_switches().to_string().as_str()));
        assert_eq!(rep.get("csv_round_trip"), Some("pass"));
    }

    // the signal file written above feeds back in as a csv source
    let csv_path = dir.path().join("out0/signal.csv");
    base["signal"] = json!({ "kind": "csv", "path": csv_path.to_str().unwrap() });
    let path = write_config(dir.path(), &base);
    let cfg = load_config(Path::new(&path)).unwrap();
    assert_eq!(cfg.resolve_signal().unwrap().taus(), &[0.0, 0.5, 1.5]);
}

#[test]
fn infeasible_generation_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = load_two_mode();
    // one switch allowed per direction, but the cycle wants more
    base["signal"] = json!({ "kind": "worst_case", "horizon": 5, "mode_cycle": [1, 2], "extra_switches": 6 });
    let path = write_config(dir.path(), &base);
    let out = dir.path().join("out");
    assert_eq!(exit_code(&["generate", "--config", &path, "--out", out.to_str().unwrap()]), 1);
    let rep = report(&out.join("generate_report.txt"));
    assert!(rep.get("generation").unwrap().starts_with("infeasible"));
}

/// Two scalar stable modes with lax duration bounds and one switch per
/// direction and unit time.
fn load_two_mode() -> Value {
    let rate = |k: f64| json!({ "terms": [{ "coef": k, "power": 1 }] });
    json!({
        "name": "two_mode",
        "family": {
            "state_dim": 1,
            "input_dim": 1,
            "modes": [
                { "field": ["-x1 + v1"], "lyapunov": "x1^2/2", "lambda": 1 },
                { "field": ["-2*x1 + v1"], "lyapunov": "x1^2", "lambda": 2 }
            ],
            "mu": [{ "from": 1, "to": 2, "mu": 2 }, { "from": 2, "to": 1, "mu": 0.5 }],
            "alpha_lower": { "a": 0.5, "p": 2 },
            "alpha_upper": { "a": 1, "p": 2 },
            "gain": "r^2"
        },
        "bounds": {
            "stable": [
                { "mode": 1, "rate": rate(0.01), "offset": 2 },
                { "mode": 2, "rate": rate(0.01), "offset": 2 }
            ],
            "transitions": [
                { "from": 1, "to": 2, "rate": rate(1.0), "offset": 1 },
                { "from": 2, "to": 1, "rate": rate(1.0), "offset": 1 }
            ]
        }
    })
}
