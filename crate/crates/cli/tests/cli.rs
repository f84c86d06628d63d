use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gexpect_cli::{config_hash, execute, parse_config, Command as Cmd, EXIT_CONFIG, EXIT_MISMATCH};
use serde_json::Value;

fn gexpect(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gexpect"))
        .args(args)
        .current_dir(dir)
        .env("GEXPECT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CHEAP: &str = r#""model": {"steps": 20}, "backend": {"pde": {"nx": 201}, "lsmc": {"n_paths": 2000, "seed": 7}}"#;

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config("{}").unwrap();
    let v = serde_json::to_value(&cfg).unwrap();
    assert_eq!(v["version"], "1");
    assert_eq!(v["model"]["steps"], 100);
    assert_eq!(v["model"]["horizon"], 1.0);
    assert_eq!(v["backend"]["kind"], "pde");
    assert_eq!(v["backend"]["pde"]["nx"], 801);
    assert_eq!(v["backend"]["lsmc"]["n_paths"], 100000);
    assert_eq!(v["quadrature"]["rule"], "auto");
    assert_eq!(v["quadrature"]["count"], 201);
    assert_eq!(v["matrix"]["include_default"], true);
}

#[test]
fn resolved_config_round_trips() {
    let cfg = parse_config(r#"{"generator": {"kind": "abs", "kappa": 0.5}, "claim": {"form": "indicator", "threshold": 0.0}}"#).unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
}

#[test]
fn unknown_key_is_rejected_with_its_path() {
    let err = parse_config(r#"{"model": {"sigma_typo": 1.0}}"#).unwrap_err();
    assert_eq!(err.path, "model.sigma_typo");
    assert!(err.message.contains("sigma_typo"), "{err}");
    let err = parse_config(r#"{"backend": {"pde": {"nx": 101, "cfl": 1}}}"#).unwrap_err();
    assert_eq!(err.path, "backend.pde.cfl");
}

#[test]
fn zero_steps_is_a_configuration_error() {
    let err = parse_config(r#"{"model": {"steps": 0}}"#).unwrap_err();
    assert_eq!(err.path, "model.steps");
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"model": {"steps": 0}}"#);
    let out = gexpect(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&out).contains("model.steps"), "{}", stderr(&out));
}

#[test]
fn wrong_version_is_rejected() {
    assert_eq!(parse_config(r#"{"version": "2"}"#).unwrap_err().path, "version");
}

#[test]
fn zero_driver_on_a_constant_prints_the_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"generator": {{"kind": "zero"}}, "claim": {{"form": "constant", "value": 2.5}}, {CHEAP}}}"#);
    let cfg = write_config(tmp.path(), &body);
    for backend in ["pde", "lsmc"] {
        let out = gexpect(&["expectation", "--config", &cfg, "--backend", backend], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stdout(&out).starts_with("E_g[const(2.5)] = 2.5 "), "{}", stdout(&out));
    }
}

#[test]
fn choquet_on_an_unbounded_claim_asks_for_clipping() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"generator": {{"kind": "abs", "kappa": 0.5}}, "claim": {{"form": "identity_clipped"}}, {CHEAP}}}"#);
    let cfg = write_config(tmp.path(), &body);
    let out = gexpect(&["choquet", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&out).contains("clip"), "{}", stderr(&out));
}

#[test]
fn missing_sections_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"claim": {"form": "constant", "value": 1.0}}"#);
    let out = gexpect(&["expectation", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&out).contains("`generator`"), "{}", stderr(&out));
}

#[test]
fn bad_flags_exit_with_configuration_status() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gexpect(&["integrate", "--config", "x.json"], tmp.path());
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn reports_are_byte_identical_and_cached() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"generator": {{"kind": "abs", "kappa": 0.5}}, "claim": {{"form": "indicator", "threshold": 0.0}}, {CHEAP}}}"#);
    let cfg = parse_config(&body).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for cmd in [Cmd::Capacity, Cmd::Choquet] {
        let ra = execute(cmd, &cfg, &a, false).unwrap();
        let rb = execute(cmd, &cfg, &b, false).unwrap();
        assert!(!ra.cached && !rb.cached);
        let (ja, jb) = (fs::read(ra.run_dir.join("report.json")).unwrap(), fs::read(rb.run_dir.join("report.json")).unwrap());
        assert_eq!(ja, jb);
        assert!(ra.run_dir.join("metadata.json").exists());
        let again = execute(cmd, &cfg, &a, false).unwrap();
        assert!(again.cached);
        assert_eq!(again.summary, ra.summary);
        assert!(!execute(cmd, &cfg, &a, true).unwrap().cached);
    }
    let mut lsmc = cfg.clone();
    lsmc.backend.kind = gexpect::expectation::BackendKind::Lsmc;
    let ra = execute(Cmd::Capacity, &lsmc, &a, false).unwrap();
    let rb = execute(Cmd::Capacity, &lsmc, &b, false).unwrap();
    assert_eq!(fs::read(ra.run_dir.join("report.json")).unwrap(), fs::read(rb.run_dir.join("report.json")).unwrap());
}

#[test]
fn hash_depends_on_command_and_config() {
    let cfg = parse_config("{}").unwrap();
    let mut seeded = cfg.clone();
    seeded.backend.lsmc.seed += 1;
    assert_ne!(config_hash(Cmd::Simulate, &cfg), config_hash(Cmd::Simulate, &seeded));
    assert_ne!(config_hash(Cmd::Simulate, &cfg), config_hash(Cmd::Expectation, &cfg));
    assert_eq!(config_hash(Cmd::Simulate, &cfg), config_hash(Cmd::Simulate, &cfg.clone()));
}

#[test]
fn simulate_writes_paths_and_moments() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{{{CHEAP}}}"));
    let out = gexpect(&["simulate", "--config", &cfg, "--seed", "11", "--out", "runs"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dir = fs::read_dir(tmp.path().join("runs")).unwrap().next().unwrap().unwrap().path();
    assert!(fs::metadata(dir.join("paths.bin")).unwrap().len() > 2000 * 21 * 8);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["backend"]["lsmc"]["seed"], 11);
    let var = report["result"]["terminal_variance"][0].as_f64().unwrap();
    assert!((var - 1.0).abs() < 0.1, "{var}");
    let again = gexpect(&["simulate", "--config", &cfg, "--seed", "11", "--out", "runs"], tmp.path());
    assert!(stdout(&again).contains("(cached)"));
}

#[test]
fn expectation_exports_conditional_tables_and_surface() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"generator": {{"kind": "pos_part", "kappa": 0.5}}, "claim": {{"form": "smooth_monotone", "amplitude": 1.0}},
            "expectation": {{"conditional_times": [0.5], "surface": true}}, {CHEAP}}}"#
    );
    let cfg = parse_config(&body).unwrap();
    let out = execute(Cmd::Expectation, &cfg, tmp.path(), false).unwrap();
    let table = fs::read_to_string(out.run_dir.join("conditional_0.csv")).unwrap();
    assert!(table.starts_with("t,x,value\n"));
    assert_eq!(table.lines().count(), 202);
    assert!(fs::read_to_string(out.run_dir.join("surface.csv")).unwrap().contains("t,x,u,du"));
}

#[test]
fn verify_reports_match_and_mismatch_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let base = r#""generator": {"kind": "abs", "kappa": 0.5}, "claim": {"form": "step", "levels": [0.5, 0.5], "thresholds": [-0.5, 0.5]}, "model": {"steps": 20}, "backend": {"pde": {"nx": 201}}"#;
    let cfg = write_config(tmp.path(), &format!("{{{base}}}"));
    let out = gexpect(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("Equal"), "{}", stdout(&out));

    // An UNEQUAL expectation with an absurd margin can only come back as a mismatch
    // once the theorem's EQUAL prediction is not in the way, so use a nonhomogeneous driver.
    let body = r#"{"generator": {"kind": "smooth_nonhom", "kappa": 1.0}, "claim": {"form": "indicator", "threshold": 0.0},
        "model": {"steps": 20}, "backend": {"pde": {"nx": 201}},
        "verify": {"expected": "unequal", "tolerances": {"abs_equal": 0.001, "error_factor": 2.0, "margin_unequal": 10.0}}}"#;
    let cfg = write_config(tmp.path(), body);
    let out = gexpect(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(EXIT_MISMATCH), "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("MISMATCH"));
}

#[test]
fn matrix_runs_listed_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = |name: &str, g: &str, k2: f64| {
        format!(
            r#"{{"name": "{name}", "generator": {{"kind": {{"kind": {g}}}, "lipschitz_k2": {k2}, "dimension": 1}},
                "claim": {{"form": "indicator", "threshold": 0.0}},
                "model": {{"coeff": {{"drift": {{"kind": "zero"}}, "diffusion": {{"kind": "constant", "matrix": [1.0]}}, "n": 1, "d": 1, "lipschitz_k1": 0.0}},
                           "x0": [0.0], "grid": {{"horizon": 1.0, "steps": 20}}}},
                "backend": {{"kind": "pde", "nx": 201}},
                "expected": "equal"}}"#
        )
    };
    let body = format!(
        r#"{{"matrix": {{"include_default": false, "scenarios": [{}, {}]}}}}"#,
        scenario("zero", r#""zero""#, 0.0),
        scenario("lin", r#""linear", "mu": [0.3]"#, 0.3)
    );
    let cfg = write_config(tmp.path(), &body);
    let out = gexpect(&["matrix", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).starts_with("matrix: 2 cells, 0 mismatches"), "{}", stdout(&out));
    let dir = fs::read_dir(tmp.path().join("runs")).unwrap().next().unwrap().unwrap().path();
    let csv = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
