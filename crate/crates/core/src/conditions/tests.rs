use super::*;
use crate::conic::{check_solution, SolveStatus};
use crate::linalg::{expm, from_rows};

fn s1() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[0.0, 1.0], &[-10.0, -1.0]]), from_rows(&[&[0.0, 1.0], &[-0.1, -0.5]])]).unwrap()
}

fn s2() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[0.0, 1.0], &[-2.0, -1.0]]), from_rows(&[&[0.0, 1.0], &[-9.0, -1.0]])]).unwrap()
}

fn s3() -> SwitchedSystem {
    SwitchedSystem::new(vec![
        from_rows(&[&[-1.0, -1.0, 1.0], &[-1.0, -1.0, 0.0], &[-2.0, 1.0, -1.0]]),
        from_rows(&[&[-1.0, 0.0, 6.0], &[-2.0, -1.0, -5.0], &[0.0, 3.0, -1.0]]),
    ])
    .unwrap()
}

fn s4() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[-2.0, 1.0], &[5.0, -3.0]]), from_rows(&[&[0.1, 0.0], &[0.1, 0.2]])]).unwrap()
}

fn robust_s2(kappa: f64) -> SwitchedSystem {
    let ch = UncertaintyChannel { u: from_rows(&[&[0.0], &[1.0]]), v: from_rows(&[&[1.0, 0.0]]), kappa };
    s2().with_uncertainty(vec![ch.clone(), ch]).unwrap()
}

fn status(b: &Built) -> SolveStatus {
    let r = solve_feasibility(&b.problem, &SolverOptions::default()).unwrap();
    let rep = check_solution(&b.problem, r.y.as_slice(), r.margin).unwrap();
    assert!(rep.consistent);
    r.status
}

fn affine(d: u32) -> Method {
    Method::Affine { degree: d }
}

fn certify_min(sys: &SwitchedSystem, tbar: f64, method: Method) -> Outcome {
    let q = DwellQuery { kind: QueryKind::MinDwell { tbar }, method };
    certify(sys, &q, &ConditionOptions::default(), &SolverOptions::default()).unwrap()
}

#[test]
fn y_matrices_shape() {
    let (y1, y2) = y_matrices(1);
    assert_eq!(y1, from_rows(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]));
    assert_eq!(y2, from_rows(&[&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]));
}

#[test]
fn boundary_rows_for_constant_z() {
    // Constant Z: Y₂ᵀZY₂ − Y₁ᵀZY₁ must vanish; with n = 1 that is 3 rows.
    let mut b = crate::polymat::ProblemBuilder::new();
    let (m, _) = b.sym_matrix(3, "Z");
    let z = crate::polymat::AffPoly::constant(m);
    let rows = boundary_constraint(&z, 1, &Domain::Interval { tbar: 1.0 }).unwrap();
    assert_eq!(rows.len(), 3);
    // Z = e₃e₃ᵀ satisfies it (both sides equal diag(0, 1)).
    let mut y = vec![0.0; 6];
    y[5] = 1.0;
    assert!(rows.iter().all(|f| f.eval(&y).abs() < 1e-15));
    // Z = e₁e₁ᵀ does not.
    let mut y = vec![0.0; 6];
    y[0] = 1.0;
    assert!(rows.iter().any(|f| f.eval(&y).abs() > 0.5));
}

#[test]
fn exponential_s1_brackets() {
    assert_eq!(status(&build_exp_min_dwell(&s1(), 2.76, true).unwrap()), SolveStatus::Certified);
    assert_eq!(status(&build_exp_min_dwell(&s1(), 2.70, true).unwrap()), SolveStatus::NotCertified);
    assert_eq!(status(&build_exp_min_dwell(&s2(), 0.63, true).unwrap()), SolveStatus::Certified);
}

#[test]
fn single_mode_trivial() {
    let sys = SwitchedSystem::new(vec![-Matrix::identity(2, 2)]).unwrap();
    let out = certify_min(&sys, 0.3, Method::Exponential);
    let cert = out.certificate.unwrap();
    assert!((&cert.p[0] - Matrix::identity(2, 2)).abs().max() < 1e-6);
    let out = certify_min(&sys, 0.3, affine(2));
    assert!(out.certificate.is_some());
}

#[test]
fn affine_s1_degree_two() {
    let start = std::time::Instant::now();
    assert_eq!(status(&build_affine_min_dwell(&s1(), 3.64, 2, &ConditionOptions::default()).unwrap()), SolveStatus::Certified);
    assert_eq!(status(&build_affine_min_dwell(&s1(), 3.62, 2, &ConditionOptions::default()).unwrap()), SolveStatus::NotCertified);
    eprintln!("S1 d=2 pair of solves: {:?}", start.elapsed());
}

#[test]
fn affine_certificate_invariants() {
    let out = certify_min(&s1(), 3.64, affine(2));
    let cert = out.certificate.unwrap();
    let lo = cert.p.iter().map(|p| min_eig(p).unwrap()).fold(f64::INFINITY, f64::min);
    assert!((lo - 1.0).abs() < 1e-9);
    assert!(cert.eps.unwrap() >= EPS_FLOOR);
    let (y1, y2) = y_matrices(2);
    for z in &cert.z {
        let res = y2.transpose() * z.poly.eval(&[3.64]).unwrap() * &y2 - y1.transpose() * z.poly.eval(&[0.0]).unwrap() * &y1;
        assert!(res.abs().max() <= 1e-7 * (1.0 + z.poly.max_abs_coeff()));
    }
    // Implication: the same P satisfy the dual discrete condition.
    let sys = s1();
    for (i, j) in sys.pairs() {
        let e = expm(&sys.modes[i], 3.64).unwrap();
        let m = &cert.p[j] - e.transpose() * &cert.p[i] * &e;
        assert!(min_eig(&m).unwrap() > 0.0);
    }
}

#[test]
fn affine_other_systems() {
    assert_eq!(status(&build_affine_min_dwell(&s2(), 0.623, 2, &ConditionOptions::default()).unwrap()), SolveStatus::Certified);
    let start = std::time::Instant::now();
    assert_eq!(status(&build_affine_min_dwell(&s3(), 1.92, 2, &ConditionOptions::default()).unwrap()), SolveStatus::Certified);
    eprintln!("S3 d=2 solve: {:?}", start.elapsed());
}

#[test]
fn mode_dependent_s4() {
    let r = |t2: f64| vec![DwellRange { tmin: 1.0, tmax: None }, DwellRange { tmin: 0.001, tmax: Some(t2) }];
    let opts = ConditionOptions::default();
    assert_eq!(status(&build_exp_mode_dependent(&s4(), &r(1.28), 50).unwrap()), SolveStatus::Certified);
    assert_eq!(status(&build_exp_mode_dependent(&s4(), &r(1.30), 50).unwrap()), SolveStatus::NotCertified);
    let start = std::time::Instant::now();
    assert_eq!(status(&build_affine_mode_dependent(&s4(), &r(1.28), 2, &opts).unwrap()), SolveStatus::Certified);
    assert_eq!(status(&build_affine_mode_dependent(&s4(), &r(1.30), 2, &opts).unwrap()), SolveStatus::NotCertified);
    eprintln!("S4 d=2 pair of solves: {:?}", start.elapsed());
}

#[test]
fn mode_dependent_identical_stable_modes() {
    let a = -Matrix::identity(2, 2);
    let sys = SwitchedSystem::new(vec![a.clone(), a]).unwrap();
    let ranges = vec![DwellRange { tmin: 0.1, tmax: Some(0.5) }, DwellRange { tmin: 0.2, tmax: Some(3.0) }];
    let q = DwellQuery { kind: QueryKind::ModeDependent { ranges: ranges.clone() }, method: Method::Exponential };
    let out = certify(&sys, &q, &ConditionOptions::default(), &SolverOptions::default()).unwrap();
    let cert = out.certificate.unwrap();
    assert!((&cert.p[0] - Matrix::identity(2, 2)).abs().max() < 1e-6);
    assert_eq!(status(&build_affine_mode_dependent(&sys, &ranges, 1, &ConditionOptions::default()).unwrap()), SolveStatus::Certified);
}

#[test]
fn robust_reduces_to_nominal() {
    let opts = ConditionOptions::default();
    for tbar in [0.6, 0.64] {
        let nominal = status(&build_affine_min_dwell(&s2(), tbar, 2, &opts).unwrap());
        let robust = status(&build_robust_min_dwell(&robust_s2(0.0), tbar, 2, &opts).unwrap());
        assert_eq!(nominal, robust, "T̄ = {tbar}");
    }
}

#[test]
fn robust_half_amplitude() {
    let opts = ConditionOptions::default();
    let start = std::time::Instant::now();
    assert_eq!(status(&build_robust_min_dwell(&robust_s2(0.5), 0.94, 2, &opts).unwrap()), SolveStatus::Certified);
    assert_eq!(status(&build_robust_min_dwell(&robust_s2(0.5), 0.91, 2, &opts).unwrap()), SolveStatus::NotCertified);
    eprintln!("robust d=2 pair of solves: {:?}", start.elapsed());
    let q = DwellQuery { kind: QueryKind::Robust { tbar: 0.94, kappa: 0.5 }, method: affine(2) };
    let out = certify(&robust_s2(1.0), &q, &opts, &SolverOptions::default()).unwrap();
    let cert = out.certificate.unwrap();
    for mu in &cert.mu_poly {
        for k in 0..100 {
            let t = 0.94 * k as f64 / 99.0;
            assert!(mu.poly.eval(&[t]).unwrap()[(0, 0)] >= -1e-7);
        }
    }
}

#[test]
fn not_certified_has_no_certificate() {
    let out = certify_min(&s1(), 1.0, Method::Exponential);
    assert!(out.certificate.is_none());
    let b = build_exp_min_dwell(&s1(), 1.0, true).unwrap();
    let r = solve_feasibility(&b.problem, &SolverOptions::default()).unwrap();
    assert!(matches!(extract_certificate(&DwellQuery { kind: QueryKind::MinDwell { tbar: 1.0 }, method: Method::Exponential }, &r, &b.layout), Err(DwellError::NotCertified)));
}

#[test]
fn input_validation() {
    assert!(build_exp_min_dwell(&s1(), 0.0, true).is_err());
    assert!(build_affine_min_dwell(&s1(), 1.0, 0, &ConditionOptions::default()).is_err());
    assert!(build_robust_min_dwell(&s1(), 1.0, 2, &ConditionOptions::default()).is_err());
    assert!(build_exp_min_dwell(&robust_s2(0.1), 1.0, true).is_err());
    let bad = vec![DwellRange { tmin: 2.0, tmax: Some(1.0) }, DwellRange { tmin: 1.0, tmax: None }];
    assert!(build_exp_mode_dependent(&s4(), &bad, 10).is_err());
    assert!(SwitchedSystem::new(vec![Matrix::zeros(2, 3)]).is_err());
}
