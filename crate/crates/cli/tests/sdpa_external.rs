//! Cross-check of exported SDPA files against an external conic solver
//! (cvxpy + Clarabel through tools/sdpa_solve.py). Skipped when python3 or
//! cvxpy is unavailable.

use std::path::PathBuf;
use std::process::Command;

use dwell_core::conditions::{build, ConditionOptions, DwellQuery, Method, QueryKind, SwitchedSystem};
use dwell_core::conic::{solve_feasibility, SolveStatus, SolverOptions};
use dwell_core::io::read_problem;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn have_cvxpy() -> bool {
    Command::new("python3").args(["-c", "import cvxpy"]).output().map(|o| o.status.success()).unwrap_or(false)
}

fn external_margin(file: &std::path::Path) -> f64 {
    let o = Command::new("python3").arg(root().join("tools/sdpa_solve.py")).arg(file).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "optimal", "{v}");
    // The epigraph objective is −t.
    -v["objective"].as_f64().unwrap()
}

#[test]
fn s1_degree_one_matches_external_solver() {
    if !have_cvxpy() {
        eprintln!("skipped: python3 with cvxpy not found");
        return;
    }
    let s1 = root().join("systems/s1.json");
    let (sys, _): (SwitchedSystem, _) = read_problem(&s1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // Five bisection-style probes around the degree-1 bound 8.854.
    for tbar in [6.0, 8.5, 8.8, 8.95, 11.0] {
        let out = dir.path().join(format!("p{tbar}.dat-s"));
        let o = Command::new(env!("CARGO_BIN_EXE_dwell"))
            .args(["export", "sdpa", s1.to_str().unwrap(), "--tbar", &tbar.to_string(), "--degree", "1", "--method", "affine", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let ext = external_margin(&out);

        let q = DwellQuery { kind: QueryKind::MinDwell { tbar }, method: Method::Affine { degree: 1 } };
        let built = build(&sys, &q, &ConditionOptions::default()).unwrap();
        let ours = solve_feasibility(&built.problem, &SolverOptions::default()).unwrap();
        assert_eq!(ext > 0.0, ours.status == SolveStatus::Certified, "T̄ = {tbar}: external t = {ext:e}, ours {:?} margin {:e}", ours.status, ours.margin);
        assert!((ext - ours.ipm_margin).abs() <= 1e-6 + 1e-3 * ext.abs(), "T̄ = {tbar}: external t = {ext:e}, ours {:e}", ours.ipm_margin);
    }
}
