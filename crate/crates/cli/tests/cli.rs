use std::path::Path;
use std::process::{Command, Output};

fn dheb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dheb"))
        .args(args)
        .current_dir(dir)
        .env("DHEB_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate(dir: &Path) {
    ok(&dheb(
        &["simulate", "--out", "data.csv", "--truth", "truth.csv", "-n", "20", "--seed", "3"],
        dir,
    ));
}

#[test]
fn unknown_flag_and_missing_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dheb(&["train", "--bogus"], dir.path()).status.code(), Some(2));
    let out = dheb(
        &["train", "--method", "dheb", "--input", "nope.csv", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
    let out = dheb(&["predict", "--model", "missing.json", "--query", "q.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    let truth = std::fs::read_to_string(d.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 101);

    for method in ["dheb", "2hb", "wa", "rlr"] {
        ok(&dheb(
            &["train", "--method", method, "--input", "data.csv", "--out", "m.json", "--r", "0.95"],
            d,
        ));
    }
    ok(&dheb(
        &["train", "--method", "fheb", "--order", "A,B,C,D", "--input", "data.csv", "--out", "m.json"],
        d,
    ));

    std::fs::write(
        d.join("q.csv"),
        "bid_unit_id,date,A,B,C,D\nbu000,2017-07-01,A00,B00,C00,D00\nnew,,A01,,,\n",
    )
    .unwrap();
    ok(&dheb(&["predict", "--model", "m.json", "--query", "q.csv", "--out", "p.csv"], d));
    let preds = std::fs::read_to_string(d.join("p.csv")).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines[0], "bid_unit_id,date,rpc");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let rpc: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(rpc.is_finite());
    }
}

#[test]
fn fheb_without_order_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let out = dheb(
        &["train", "--method", "fheb", "--input", "data.csv", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d);
    std::fs::write(
        d.join("cfg.json"),
        r#"{"method": "fheb", "order": ["A", "B"], "data_source": "data.csv", "model_path": "pub.json"}"#,
    )
    .unwrap();
    ok(&dheb(&["--config", "cfg.json", "retrain-daemon", "--once"], d));
    let model: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("pub.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["method"], "fheb");
    assert!(model["trained_at"].is_string());

    std::fs::write(d.join("bad.json"), r#"{"nonsense": true}"#).unwrap();
    assert_eq!(
        dheb(&["--config", "bad.json", "retrain-daemon", "--once"], d).status.code(),
        Some(2)
    );
}

#[test]
fn serve_refuses_an_unloadable_model() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.json"), "{\"format_version\": 1, \"nodes\": [").unwrap();
    let out = dheb(&["serve", "--model", "m.json", "--listen", "127.0.0.1:0"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m.json"));
}

#[test]
fn evaluate_and_staleness_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&dheb(&["simulate", "--out", "data.csv", "-n", "40", "--seed", "9"], d));
    ok(&dheb(
        &["evaluate", "--input", "data.csv", "--methods", "dheb,2hb", "--horizon", "5", "--out", "r.json", "--csv", "r.csv"],
        d,
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["WA", "DHEB", "2HB"]);
    assert!(std::fs::read_to_string(d.join("r.csv")).unwrap().starts_with("model,metric,value"));

    ok(&dheb(
        &["staleness", "--input", "data.csv", "--periods", "1,4", "--horizon", "8", "--out", "s.json"],
        d,
    ));
    let s: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(s["rows"][0]["degradation_vs_daily"], 0.0);
    assert_eq!(s["rows"][1]["offline_runs"], 2);
}
