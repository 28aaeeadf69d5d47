use super::*;
use crate::conditions::{certify, DwellQuery, DwellRange, Outcome, UncertaintyChannel};
use crate::conic::SolverOptions;
use crate::linalg::{from_rows, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s1() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[0.0, 1.0], &[-10.0, -1.0]]), from_rows(&[&[0.0, 1.0], &[-0.1, -0.5]])]).unwrap()
}

fn s4() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[-2.0, 1.0], &[5.0, -3.0]]), from_rows(&[&[0.1, 0.0], &[0.1, 0.2]])]).unwrap()
}

fn solve(sys: &SwitchedSystem, kind: QueryKind, method: Method) -> Outcome {
    certify(sys, &DwellQuery { kind, method }, &ConditionOptions::default(), &SolverOptions::default()).unwrap()
}

fn s1_d2() -> DwellCertificate {
    solve(&s1(), QueryKind::MinDwell { tbar: 3.64 }, Method::Affine { degree: 2 }).certificate.unwrap()
}

fn identity_cert(modes: usize, n: usize, tbar: f64) -> DwellCertificate {
    DwellCertificate {
        query: DwellQuery { kind: QueryKind::MinDwell { tbar }, method: Method::Exponential },
        p: vec![Matrix::identity(n, n); modes],
        eps: None,
        z: vec![],
        mu_const: vec![],
        mu_poly: vec![],
        margin: 0.0,
    }
}

#[test]
fn identity_certificate_single_mode() {
    let sys = SwitchedSystem::new(vec![-Matrix::identity(2, 2)]).unwrap();
    let rep = verify_certificate(&sys, &identity_cert(1, 2, 0.5), DEFAULT_GRID).unwrap();
    assert!(rep.pass);
}

#[test]
fn discrete_closed_form() {
    let a = -Matrix::identity(2, 2);
    let sys = SwitchedSystem::new(vec![a.clone(), a]).unwrap();
    let p = vec![Matrix::identity(2, 2); 2];
    for t in [0.1, 1.0, 3.0] {
        for form in [DiscreteForm::Primal, DiscreteForm::Dual] {
            for m in check_discrete_condition(&sys, &p, t, form).unwrap() {
                assert!((m.margin - (1.0 - (-2.0 * t).exp())).abs() < 1e-12);
            }
        }
    }
    assert!(check_discrete_condition(&sys, &p[..1], 1.0, DiscreteForm::Dual).is_err());
}

#[test]
fn s1_affine_certificate() {
    let sys = s1();
    let cert = s1_d2();
    let rep = verify_certificate(&sys, &cert, DEFAULT_GRID).unwrap();
    assert!(rep.pass, "{:?}", rep.failures().collect::<Vec<_>>());
    assert!(rep.worst_margin("looped").unwrap() >= -VERIFY_TOL);
    for m in check_discrete_condition(&sys, &cert.p, 3.64, DiscreteForm::Dual).unwrap() {
        assert!(m.margin > 0.0);
    }

    // Same P against half the dwell-time: the discrete condition breaks.
    let mut half = cert.clone();
    half.query.kind = QueryKind::MinDwell { tbar: 1.82 };
    let rep = verify_certificate(&sys, &half, DEFAULT_GRID).unwrap();
    assert!(!rep.pass);
    assert!(rep.worst_margin("discrete").unwrap() < 0.0);

    let mut flipped = cert;
    flipped.p[0] *= -1.0;
    assert!(!verify_certificate(&sys, &flipped, DEFAULT_GRID).unwrap().pass);
}

#[test]
fn mode_dependent_certificate() {
    let ranges = vec![DwellRange { tmin: 1.0, tmax: None }, DwellRange { tmin: 0.001, tmax: Some(1.2) }];
    let out = solve(&s4(), QueryKind::ModeDependent { ranges }, Method::Affine { degree: 2 });
    let rep = verify_certificate(&s4(), &out.certificate.unwrap(), 60).unwrap();
    assert!(rep.pass, "{:?}", rep.failures().collect::<Vec<_>>());
}

#[test]
fn robust_certificate() {
    let s2 = SwitchedSystem::new(vec![from_rows(&[&[0.0, 1.0], &[-2.0, -1.0]]), from_rows(&[&[0.0, 1.0], &[-9.0, -1.0]])]).unwrap();
    let ch = UncertaintyChannel { u: from_rows(&[&[0.0], &[1.0]]), v: from_rows(&[&[1.0, 0.0]]), kappa: 1.0 };
    let sys = s2.with_uncertainty(vec![ch.clone(), ch]).unwrap();
    let out = solve(&sys, QueryKind::Robust { tbar: 1.0, kappa: 0.5 }, Method::Affine { degree: 2 });
    let cert = out.certificate.unwrap();
    let rep = verify_certificate(&sys, &cert, DEFAULT_GRID).unwrap();
    assert!(rep.pass, "{:?}", rep.failures().collect::<Vec<_>>());
    // A larger amplitude than certified is caught by the δ-grid.
    let mut louder = cert;
    louder.query.kind = QueryKind::Robust { tbar: 1.0, kappa: 1.3 };
    assert!(!verify_certificate(&sys, &louder, DEFAULT_GRID).unwrap().pass);
}

#[test]
fn simulate_single_mode() {
    let sys = SwitchedSystem::new(vec![-Matrix::identity(2, 2)]).unwrap();
    let x0 = Vector::from_vec(vec![1.0, 0.0]);
    let tr = simulate(&sys, &[(0, 1.0)], &x0, 0.01, None).unwrap();
    let x = tr.final_state().unwrap();
    assert!((x[0] - (-1.0f64).exp()).abs() < 1e-14 && x[1] == 0.0);
    assert!((tr.samples.last().unwrap().t - 1.0).abs() < 1e-15);
    assert!(simulate(&sys, &[], &x0, 0.1, None).is_err());
    assert!(simulate(&sys, &[(0, 1.0)], &x0, 0.0, None).is_err());
}

#[test]
fn s1_alternating_converges_s4_periodic_grows() {
    let seq: Vec<(usize, f64)> = (0..20).map(|k| (k % 2, 2.76)).collect();
    let x0 = Vector::from_vec(vec![1.0, -0.5]);
    let tr = simulate(&s1(), &seq, &x0, 0.05, None).unwrap();
    // Close to the minimum dwell-time the contraction per switch is weak.
    assert!(tr.final_state().unwrap().norm() < 0.5 * x0.norm());
    assert_eq!(tr.jumps.len(), 19);
    let long: Vec<(usize, f64)> = (0..200).map(|k| (k % 2, 2.76)).collect();
    let tr = simulate(&s1(), &long, &x0, 0.5, None).unwrap();
    assert!(tr.final_state().unwrap().norm() < 1e-4 * x0.norm());

    // ρ(e^{1.4 A₂} e^{A₁}) ≈ 1.019, so growth needs a few hundred switches to show.
    let seq: Vec<(usize, f64)> = (0..400).map(|k| (k % 2, if k % 2 == 0 { 1.0 } else { 1.4 })).collect();
    let tr = simulate(&s4(), &seq, &x0, 0.5, None).unwrap();
    assert!(tr.final_state().unwrap().norm() > 10.0 * x0.norm());
}

#[test]
fn certified_lyapunov_decreases_at_switches() {
    let cert = s1_d2();
    let seq: Vec<(usize, f64)> = (0..10).map(|k| (k % 2, 3.64 + 0.5 * (k % 3) as f64)).collect();
    let tr = simulate(&s1(), &seq, &Vector::from_vec(vec![0.3, 1.0]), 0.1, Some(&cert.p)).unwrap();
    // V of the outgoing mode, sampled at consecutive switch instants, decreases.
    let before: Vec<f64> = tr.jumps.iter().map(|j| j.before).collect();
    for w in before.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn looped_functional_zero_trajectory() {
    let cert = s1_d2();
    let seg = Segment { times: vec![0.0, 1.0, 3.64], states: vec![Vector::zeros(2); 3] };
    assert!(eval_looped_functional(&cert, &seg, 0, 1).unwrap().iter().all(|&w| w == 0.0));
    let short = Segment { times: vec![0.0, 1.0], states: vec![Vector::zeros(2); 2] };
    assert!(eval_looped_functional(&cert, &short, 0, 1).is_err());
}

#[test]
fn looped_functional_monotone_and_loop_identity() {
    let sys = s1();
    let cert = s1_d2();
    let eps = cert.eps.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let x0 = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let tr = simulate(&sys, &[(0, 3.64)], &x0, 0.01, None).unwrap();
        let seg = tr.segment(0).unwrap();
        let w = eval_looped_functional(&cert, &seg, 0, 1).unwrap();
        let scale = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for pair in w.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-5 * scale);
        }
        let xt = seg.states.last().unwrap();
        let want = 3.64 * (xt.dot(&(&cert.p[0] * xt)) - x0.dot(&(&cert.p[1] * &x0)) + eps * x0.norm_squared());
        let got = w.last().unwrap() - w[0];
        assert!((got - want).abs() <= 1e-6 * want.abs().max(scale));
    }
}

#[test]
fn csv_trace_format() {
    let sys = SwitchedSystem::new(vec![-Matrix::identity(2, 2), Matrix::zeros(2, 2)]).unwrap();
    let tr = simulate(&sys, &[(0, 0.5), (1, 0.5)], &Vector::from_vec(vec![1.0, 2.0]), 0.25, None).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&tr, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,mode,x1,x2,V"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first, vec!["0.0000000000000000e0", "1", "1.0000000000000000e0", "2.0000000000000000e0", "5.0000000000000000e0"]);
    let row: Vec<f64> = text.lines().nth(3).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row[0], 0.5);
    assert_eq!(row[2], (-0.5f64).exp());
    assert_eq!(text.lines().count(), 1 + 3 + 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn subdivided_propagation_matches_single_step(
        entries in proptest::collection::vec(-2.0f64..2.0, 8),
        d1 in 0.0f64..2.0, d2 in 0.0f64..2.0, dt in 0.01f64..0.5,
    ) {
        let a1 = Matrix::from_row_slice(2, 2, &entries[..4]);
        let a2 = Matrix::from_row_slice(2, 2, &entries[4..]);
        let sys = SwitchedSystem::new(vec![a1.clone(), a2.clone()]).unwrap();
        let x0 = Vector::from_vec(vec![1.0, -1.0]);
        let tr = simulate(&sys, &[(0, d1), (1, d2)], &x0, dt, None).unwrap();
        let want = expm(&a2, d2).unwrap() * expm(&a1, d1).unwrap() * &x0;
        let got = tr.final_state().unwrap();
        prop_assert!((got - &want).norm() <= 1e-9 * (1.0 + want.norm()));
    }
}
