use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dwell"))
}

fn system(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../systems").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn min_dwell_check_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let s1 = system("s1.json");
    let o = run(&["--format", "json", "search", "min-dwell", s1.to_str().unwrap(), "--method", "exp", "--cert-out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o)["value"].as_f64().unwrap();
    assert!((v - 2.7508).abs() <= 1e-2, "{v}");

    let o = run(&["check", s1.to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with("PASS"));

    let mut file: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    for row in file["P"][0].as_array_mut().unwrap() {
        for x in row.as_array_mut().unwrap() {
            *x = serde_json::json!(-x.as_f64().unwrap());
        }
    }
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&file).unwrap()).unwrap();
    let o = run(&["check", s1.to_str().unwrap(), tampered.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn affine_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let s1 = system("s1.json");
    let o = run(&["search", "min-dwell", s1.to_str().unwrap(), "--method", "affine", "--degree", "1", "--tol", "0.01", "--cert-out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let first = std::fs::read_to_string(&cert).unwrap();
    let a = run(&["--format", "json", "check", s1.to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(json(&a)["pass"], serde_json::json!(true));

    // Same inputs, same bytes.
    let o = run(&["search", "min-dwell", s1.to_str().unwrap(), "--method", "affine", "--degree", "1", "--tol", "0.01", "--cert-out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, std::fs::read_to_string(&cert).unwrap());
}

#[test]
fn periodic_oracle() {
    let o = run(&["--format", "json", "oracle", "periodic", system("s4.json").to_str().unwrap(), "--fixed", "T1=1"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o)["critical"].as_f64().unwrap();
    assert!((v - 1.2847).abs() <= 1e-3, "{v}");
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"n\": 2,\n  \"modes\": [[[0, 1], [-1, -1]]],\n  \"colour\": 3\n}\n").unwrap();
    let o = run(&["search", "min-dwell", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("colour") && err.contains("line 4"), "{err}");

    let o = run(&["search", "min-dwell", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["oracle", "periodic", system("s4.json").to_str().unwrap(), "--fixed", "T9=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["search", "min-dwell"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unbounded_search_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("unstable.json");
    std::fs::write(&f, r#"{"n": 1, "modes": [[[-1]], [[0.5]]]}"#).unwrap();
    let cert = dir.path().join("c.json");
    let o = run(&["search", "min-dwell", f.to_str().unwrap(), "--tol", "1", "--cap", "64", "--cert-out", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!cert.exists());
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = run(&[
        "simulate",
        system("s1.json").to_str().unwrap(),
        "--sequence",
        "1:2.76,2:2.76",
        "--repeat",
        "2",
        "--x0",
        "1,-0.5",
        "--dt",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,mode,x1,x2,V"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 5);
    assert_eq!(first[1], "1");
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!((last[0] - 4.0 * 2.76).abs() < 1e-12);
    assert_eq!(last[1], 2.0);
}

#[test]
fn export_sdpa_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.dat-s");
    let o = run(&["export", "sdpa", system("s1_affine.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let parsed = dwell_core::conic::parse_sdpa(&text).unwrap();
    assert!(parsed.problem.num_vars > 0);
    let o = run(&["export", "sdpa", system("s1.json").to_str().unwrap(), "--tbar", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["export", "sdpa", system("s1.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mode_dependent_table() {
    let o = run(&[
        "--format",
        "json",
        "search",
        "mode-dep",
        system("s4.json").to_str().unwrap(),
        "--target-mode",
        "2",
        "--degree",
        "2",
        "--range",
        "1=2",
        "--periodic",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let d2 = v["rows"][0]["values"][0].as_f64().unwrap();
    let per = v["rows"][1]["values"][0].as_f64().unwrap();
    assert!((d2 - 2.5471).abs() / 2.5471 <= 0.01, "{d2}");
    assert!((per - 2.5471).abs() <= 1e-3, "{per}");
    assert!(d2 <= per + 1e-3);
}
