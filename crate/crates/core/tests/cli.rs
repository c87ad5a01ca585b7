use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn grasskit(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_grasskit"));
    cmd.args(args).env_remove("GRASSKIT_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn without_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn selftest_passes_and_prints_check_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "st.json", r#"{"kind":"geometry-selftest","samples":40}"#);
    let out = grasskit(&["run", "--config", &cfg, "--seed", "1"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["passes"], true);
    assert_eq!(report["config"]["seed"], 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().count() >= 4);
    assert!(stderr.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn config_errors_exit_two_with_a_record() {
    let dir = tempfile::tempdir().unwrap();
    for (body, kind) in [
        (r#"{"kind":"sharp-dimension"}"#, "invalid-params"),
        (r#"{"kind":"sharp-dimension","params":{"l":0,"m":1,"d":1,"n":2,"beta":3}}"#, "invalid-params"),
        (
            r#"{"kind":"sharp-dimension","params":{"l":0,"m":1,"d":1,"n":2,"beta":1},"deltas":[0.3]}"#,
            "invalid-scale",
        ),
        (r#"{"kind":"geometry-selftest","bogus":1}"#, "json"),
        ("not json", "json"),
    ] {
        let cfg = write_config(dir.path(), "bad.json", body);
        let out = grasskit(&["run", "--config", &cfg], &[]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        assert!(out.stdout.is_empty());
        let rec: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(rec["error"]["kind"], kind, "{body}");
        assert_eq!(rec["error"]["exit_code"], 2);
    }
    let missing = grasskit(&["run", "--config", "/nonexistent/cfg.json"], &[]);
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn oversized_runs_hit_the_resource_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "big.json",
        r#"{"kind":"kakeya-sweep","params":{"l":0,"m":1,"d":1,"n":2,"beta":0},"deltas":[0.0001220703125,0.00006103515625]}"#,
    );
    let out = grasskit(&["run", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(3));
    let rec: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"]["kind"], "resource-cap");
}

#[test]
fn validate_prints_the_normalized_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "k.json",
        r#"{"kind":"kakeya-sweep","params":{"l":0,"m":1,"d":1,"n":2,"beta":0},"deltas":[0.0625,0.125,0.0625]}"#,
    );
    let out = grasskit(&["validate", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["deltas"], serde_json::json!([0.125, 0.0625]));
    assert_eq!(v["ps"].as_array().unwrap().len(), 3);
}

#[test]
fn reports_are_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bl.json",
        r#"{"kind":"bl-audit","params":{"l":0,"m":1,"d":1,"n":2,"beta":0.5},"samples":12,"seed":5}"#,
    );
    let a = grasskit(&["run", "--config", &cfg, "--workers", "1"], &[]);
    let b = grasskit(&["run", "--config", &cfg], &[("GRASSKIT_WORKERS", "4")]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let (ra, rb) = (stdout_json(&a), stdout_json(&b));
    assert_eq!(ra["timings"]["workers"], 1);
    assert_eq!(rb["timings"]["workers"], 4);
    assert_eq!(without_timings(ra), without_timings(rb));
}

#[test]
fn out_and_csv_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"kind":"sharp-dimension","params":{"l":0,"m":1,"d":1,"n":2,"beta":0.5},"deltas":[0.125,0.0625,0.03125]}"#,
    );
    let out_path = dir.path().join("report.json");
    let csv_path = dir.path().join("table.csv");
    let out = grasskit(
        &["run", "--config", &cfg, "--out", out_path.to_str().unwrap(), "--csv", csv_path.to_str().unwrap()],
        &[],
    );
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(without_timings(on_disk), without_timings(stdout_json(&out)));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let out = grasskit(&["validate", "--config", path.to_str().unwrap()], &[]);
            assert_eq!(out.status.code(), Some(0), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
