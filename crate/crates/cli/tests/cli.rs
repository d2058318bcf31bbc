use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tubewcp"))
}

fn flagship() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/flagship.json")
}

fn run(args: &[&str]) -> (Output, Option<Value>) {
    let out = bin().args(args).output().unwrap();
    let json = serde_json::from_slice(&out.stdout).ok();
    (out, json)
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn metric_circle_and_line() {
    let (out, json) = run(&["metric", "--manifold", "circle", "--eps", "0.25"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json.unwrap()["result"];
    let k1 = r["k1"].as_f64().unwrap();
    assert!((k1 - 1.05).abs() < 1e-3, "{k1}");
    assert!((r["epsilon1"].as_f64().unwrap() - 1.0 / (2.0 * k1)).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let (out, _) = run(&["metric", "--manifold", "line", "--eps", "0.9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("metric.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "lambda").unwrap();
    for rec in rdr.records() {
        let lam: f64 = rec.unwrap()[col].parse().unwrap();
        assert!((lam - 1.0).abs() < 1e-12);
    }
    assert!(dir.path().join("metric.json").exists());
}

#[test]
fn bad_manifold_is_a_config_error() {
    let (out, _) = run(&["metric", "--manifold", "klein-bottle", "--eps", "0.2"]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"manifold": "line", "eps": 0.2}"#);
    let (out, _) = run(&["metric", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn assumptions_helix_pass() {
    let (out, json) = run(&["check-assumptions", "--config", flagship().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let list = json.unwrap()["result"]["assumptions"].as_array().unwrap().clone();
    assert_eq!(list.len(), 5);
    assert!(list.iter().all(|a| a["pass"] == true));
}

#[test]
fn assumptions_spiral_and_bad_exponent_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spiral.json",
        r#"{"schema_version": 1, "manifold": "arctan-spiral", "eps": 0.05,
            "window": [[50.0, 62.566370614359172]],
            "ladder": {"radii": [0.5, 1.0, 2.0], "r0": 0.25}}"#,
    );
    let (out, json) = run(&["check-assumptions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let r = &json.unwrap()["result"];
    let main = &r["assumptions"][0];
    assert_eq!(main["name"], "main");
    assert_eq!(main["pass"], false);
    assert!(!main["constants"]["at"]["witnesses"].as_array().unwrap().is_empty());

    let cfg = write_config(
        dir.path(),
        "t2.json",
        r#"{"schema_version": 1, "manifold": "helix", "eps": 0.05, "t": 2.0, "window": [[0.0, 16.0]]}"#,
    );
    let (out, json) = run(&["check-assumptions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert_eq!(json.unwrap()["result"]["failures"], serde_json::json!(["A1"]));
}

#[test]
fn verify_flagship_and_inflated_eps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = flagship();
    let (out, _) = run(&["verify-wcp", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&std::fs::read(dir.path().join("verify-wcp.json")).unwrap()).unwrap();
    let r = &rep["result"]["report"];
    assert_eq!(r["hypothesis_void"], false);
    assert_eq!(r["verdicts"]["iteration"]["verdict"], "forced-zero");
    for key in ["constants", "ladder", "verdicts", "certification"] {
        assert!(!r[key].is_null(), "{key}");
    }
    assert!(dir.path().join("u.csv").exists() && dir.path().join("v.csv").exists());
    // Reports embed the resolved config.
    assert_eq!(rep["config"]["eps"], 0.05);

    let (out, json) = run(&["verify-wcp", "--config", cfg.to_str().unwrap(), "--eps", "0.45"]);
    assert!(matches!(code(&out), 0 | 7));
    assert_eq!(json.unwrap()["result"]["report"]["hypothesis_void"], true);
}

#[test]
fn verify_without_boundary_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "manifold": "helix", "eps": 0.05, "window": [[0.0, 16.0]]}"#,
    );
    let out_dir = dir.path().join("out");
    let (out, _) = run(&["verify-wcp", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists() || std::fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn swapped_data_is_not_certified() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(flagship())
        .unwrap()
        .replace(r#""u": 0.0, "v": 0.1"#, r#""u": 0.1, "v": 0.0"#);
    let cfg = write_config(dir.path(), "swap.json", &text);
    let (out, _) = run(&["verify-wcp", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 5);
}

#[test]
fn solver_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "manifold": "line", "eps": 0.5, "window": [[0.0, 1.0]],
            "reaction": {"kind": "constant", "value": 1.0}, "boundary": {"u": 0.0},
            "solver": {"max_iter": 0}}"#,
    );
    let (out, _) = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 6);
    let cfg = write_config(
        dir.path(),
        "ok.json",
        r#"{"schema_version": 1, "manifold": "line", "eps": 0.5, "window": [[0.0, 1.0]],
            "reaction": {"kind": "constant", "value": 1.0}, "boundary": {"u": 0.0}}"#,
    );
    let out_dir = dir.path().join("o");
    let (out, _) = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out_dir.join("u.csv").exists() && out_dir.join("u.meta.json").exists());
}

#[test]
fn epsilon0_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "free.json",
        r#"{"schema_version": 1, "manifold": "helix", "eps": 0.05, "window": [[0.0, 16.0]], "lambda": 0.0,
            "epsilon0": {"gamma": 1.0, "constants": {"l_f": 0.0, "grad_u": 0.0, "grad_v": 0.0}}}"#,
    );
    let (out, json) = run(&["epsilon0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json.unwrap()["result"];
    assert_eq!(r["epsilon0"], r["epsilon1"]);

    let cfg = write_config(
        dir.path(),
        "synthetic.json",
        r#"{"schema_version": 1, "manifold": "line", "eps": 0.05,
            "epsilon0": {"gamma": 1.0, "synthetic_slope": 1.0}}"#,
    );
    let (out, json) = run(&["epsilon0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!((json.unwrap()["result"]["epsilon0"].as_f64().unwrap() - 0.45).abs() <= 1e-10);

    let cfg = write_config(
        dir.path(),
        "gamma0.json",
        r#"{"schema_version": 1, "manifold": "line", "eps": 0.05, "epsilon0": {"gamma": 0.0}}"#,
    );
    let (out, _) = run(&["epsilon0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    let cfg = write_config(
        dir.path(),
        "missing.json",
        r#"{"schema_version": 1, "manifold": "helix", "eps": 0.05, "window": [[0.0, 16.0]],
            "epsilon0": {"gamma": 1.0}}"#,
    );
    let (out, _) = run(&["epsilon0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn reports_are_deterministic() {
    let a = bin().args(["verify-wcp", "--config", flagship().to_str().unwrap(), "--seed", "7"]).output().unwrap();
    let b = bin()
        .env("TUBEWCP_THREADS", "1")
        .args(["verify-wcp", "--config", flagship().to_str().unwrap(), "--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn small_commands() {
    let (out, json) = run(&["volume-growth", "--manifold", "line", "--eps", "0.5", "--window", "-10:10"]);
    assert_eq!(code(&out), 0);
    assert!((json.unwrap()["result"]["fit"]["gamma"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let (out, json) = run(&["rts", "--manifold", "helix", "--eps", "0.3", "--samples", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json.unwrap()["result"]["samples"].as_array().unwrap().len(), 2);

    let (out, json) = run(&["sobolev", "--manifold", "helix", "--eps", "0.1", "--window", "0:4"]);
    assert_eq!(code(&out), 0);
    assert!(json.unwrap()["result"]["estimate"]["c_s"].as_f64().unwrap() > 0.0);

    let (out, json) = run(&["reach", "--manifold", "circle", "--eps", "0.3"]);
    assert_eq!(code(&out), 0);
    assert!((json.unwrap()["result"]["min_rho"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "it.json",
        r#"{"schema_version": 1, "manifold": "line", "eps": 0.5,
            "iteration": {"ladder": {"radii": [1, 2, 4], "l": [0, 0, 0], "g": [0, 0, 0]},
                          "theta": 0.25, "gamma": 1.0, "c": 1.0}}"#,
    );
    let (out, json) = run(&["iterate-lemma", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json.unwrap()["result"]["verdict"], "forced-zero");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("0.25", "0.5");
    std::fs::write(&cfg, text).unwrap();
    let (out, _) = run(&["iterate-lemma", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 8);
}
