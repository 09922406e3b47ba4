use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn csm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csm"))
        .args(args)
        .env_remove("CSM_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn csm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn num(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap(),
        Value::String(s) => s.parse().unwrap(),
        _ => panic!("not a number: {v}"),
    }
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, actual: &str) {
    let path = Path::new("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "golden file {name} differs");
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn entropy_of_horseshoe_is_log3_with_zero_width() {
    let o = csm(&["entropy", "tests/data/horseshoe3.json"]);
    let v = json(&o);
    assert!((num(&v["value"]) - 3f64.ln()).abs() < 1e-12);
    assert_eq!(v["estimate"]["lambda_bracket"], serde_json::json!(["3", "3"]));
    assert_eq!(v["lap_bracket"]["method"], "LapCount");
    golden("entropy_horseshoe3.json", &stdout(&o));
}

#[test]
fn entropy_of_example2_is_bracketed_by_laps() {
    for method in ["auto", "transfer", "markov"] {
        let v = json(&csm(&["entropy", "tests/data/example2.json", "--method", method]));
        let h = num(&v["value"]);
        assert!((h - 0.62521).abs() < 1e-4, "{method}: {h}");
        assert!(num(&v["lap_bracket"]["upper_bound"]) >= h);
    }
}

#[test]
fn markov_method_refuses_non_markov_maps() {
    let o = csm(&["entropy", "tests/data/example1_g_eighth.json", "--method", "markov"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn lap_budget_exhaustion_reports_partial_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, r#"{"lap_budget": 50}"#).unwrap();
    let o = csm(&["--config", cfg.to_str().unwrap(), "entropy", "tests/data/example1_g_eighth.json", "--method", "lap"]);
    assert_eq!(o.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["lap_bracket"]["lap_counts"].as_array().is_some_and(|c| !c.is_empty()));
}

#[test]
fn malformed_maps_name_the_offending_dot() {
    let o = csm(&["entropy", "tests/data/nonmap.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("dot 1") && err.contains("3/2"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"dots\": [\n  [\"0\", \"0\"],\n  oops]}").unwrap();
    let o = csm(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn csmodel_of_constant_slope_map_is_itself() {
    let v = json(&csm(&["csmodel", "tests/data/horseshoe3.json"]));
    let cs = &v["csmodel"];
    assert_eq!(cs["model"], serde_json::json!([["0", "0"], ["1/3", "1"], ["2/3", "0"], ["1", "1"]]));
    assert_eq!(num(&cs["conjugacy_residual"]), 0.0);
    assert_eq!(cs["untrusted"], Value::Null);
}

#[test]
fn csmodel_recovers_constant_slope_partner() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("model.json");
    let o = csm(&["csmodel", "tests/data/example1_g.json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let target: Value = serde_json::from_str(&fs::read_to_string("tests/data/gtilde_quarter.json").unwrap()).unwrap();
    assert_eq!(v["csmodel"]["model"], target["dots"]);
    assert!((num(&v["csmodel"]["lambda"]) - 3.5).abs() < 1e-12);
}

#[test]
fn csmodel_solves_a_nonlinear_conjugacy() {
    let v = json(&csm(&["csmodel", "tests/data/example1_g_eighth.json"]));
    let cs = &v["csmodel"];
    assert_eq!(cs["converged"], true);
    assert!((num(&cs["lambda"]) - 3.25).abs() < 1e-8);
    assert!(num(&cs["conjugacy_residual"]) < 1e-6);
    assert!(num(&cs["min_psi_slope"]) > 0.0);
}

#[test]
fn csmodel_refuses_non_transitive_maps_unless_forced() {
    let o = csm(&["csmodel", "tests/data/gtilde0.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("NotTransitive"));
    let v = json(&csm(&["csmodel", "tests/data/gtilde0.json", "--force"]));
    assert_eq!(v["forced"], true);
    assert_eq!(v["csmodel"]["untrusted"], "transitivity unverified");
}

#[test]
fn diagrams_of_markov_maps_close() {
    let o = csm(&["diagram", "tests/data/horseshoe3.json"]);
    golden("diagram_horseshoe3.dot", &stdout(&o));
    for (file, vertices, arrows) in [("horseshoe3", 3, 9), ("tent2", 2, 4)] {
        let v = json(&csm(&["diagram", &format!("tests/data/{file}.json"), "--format", "json"]));
        assert_eq!(v["vertices"].as_array().unwrap().len(), vertices, "{file}");
        assert_eq!(v["arrow_count"], arrows, "{file}");
        assert_eq!(v["exact"], true);
    }
    let v = json(&csm(&["diagram", "tests/data/example2.json", "--word-cap", "20", "--format", "json"]));
    assert!(v["truncated"].is_boolean());
    let v = json(&csm(&["diagram", "tests/data/example2.json", "--vertex-cap", "4", "--format", "json"]));
    assert_eq!(v["truncated"], true);
}

#[test]
fn preimage_tables() {
    let o = csm(&["preimages", "tests/data/horseshoe3.json", "--point", "1/2", "--n", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(csv_column(&stdout(&o), "ratio").iter().all(|r| r == "1"));

    let o = csm(&["preimages", "tests/data/tent2.json", "--point", "1/2", "--n", "12"]);
    let counts = csv_column(&stdout(&o), "count");
    assert_eq!(counts, (1..=12).map(|n| (1u64 << n).to_string()).collect::<Vec<_>>());
    golden("preimages_tent2.csv", &stdout(&o));

    assert_eq!(csm(&["preimages", "tests/data/tent2.json", "--point", "3/2"]).status.code(), Some(2));
    assert_eq!(csm(&["preimages", "tests/data/tent2.json", "--point", "0.5"]).status.code(), Some(2));

    let o = csm(&["preimages", "tests/data/tent2.json", "--point", "1/3", "--n", "12", "--budget", "100"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("# complete: false"));
}

#[test]
fn check_verdicts() {
    let v = json(&csm(&["check", "tests/data/horseshoe3.json"]));
    assert_eq!(v["transitivity"]["status"], "TransitiveLEO");
    assert_eq!(v["modality"], 2);

    let o = csm(&["check", "tests/data/gtilde0.json"]);
    let v = json(&o);
    assert_eq!(v["transitivity"]["status"], "NotTransitive");
    assert_eq!(v["transitivity"]["evidence"]["kind"], "invariant_set");
    golden("check_gtilde0.json", &stdout(&o));

    let v = json(&csm(&["check", "tests/data/identity.json"]));
    assert_eq!(v["transitivity"]["status"], "NotTransitive");
    assert!(v["fixed_points"]["degenerate"].is_string());
}

#[test]
fn experiment_tables() {
    let o = csm(&["experiment", "example1", "--t-values", "1/4,1/8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# d_gtilde0_f: 1.000000000000e0"));
    let d: Vec<f64> = csv_column(&text, "d_model").iter().map(|x| x.parse().unwrap()).collect();
    assert!(d.iter().all(|&x| x > 0.5));

    let o = csm(&["experiment", "example2", "--t-values", "1/2,1/4"]);
    let bound: Vec<f64> = csv_column(&stdout(&o), "horseshoe_bound").iter().map(|x| x.parse().unwrap()).collect();
    assert!(bound.iter().all(|&b| (b - 2f64.ln()).abs() < 1e-12));

    let o = csm(&["experiment", "modality-preserving", "--t-values", "1/8,1/16"]);
    let text = stdout(&o);
    assert!(text.contains("# family_origin: artifact family"));
    let dmap: Vec<f64> = csv_column(&text, "d_map").iter().map(|x| x.parse().unwrap()).collect();
    assert!(dmap[1] < dmap[0]);
}

#[test]
fn runs_are_reproducible_with_one_thread() {
    let args = ["--threads", "1", "experiment", "theorem2", "--t-values", "1/4,1/8"];
    let a = csm(&args);
    let b = csm(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_file_from_environment_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"tol": 1e-8, "lap_depth": 10}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_csm"))
        .args(["entropy", "tests/data/tent2.json"])
        .env("CSM_CONFIG", &cfg)
        .output()
        .unwrap();
    let v = json(&o);
    assert_eq!(num(&v["config"]["tol"]), 1e-8);
    assert_eq!(v["lap_bracket"]["depth"], 10);

    let o = Command::new(env!("CARGO_BIN_EXE_csm"))
        .args(["--tol", "1e-6", "entropy", "tests/data/tent2.json"])
        .env("CSM_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(num(&json(&o)["config"]["tol"]), 1e-6);

    fs::write(&cfg, r#"{"tolerance": 1e-8}"#).unwrap();
    let o = csm(&["--config", cfg.to_str().unwrap(), "entropy", "tests/data/tent2.json"]);
    assert_eq!(o.status.code(), Some(2));
}
