use super::*;
use crate::conditions::UncertaintyChannel;
use crate::linalg::from_rows;

fn s1() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[0.0, 1.0], &[-10.0, -1.0]]), from_rows(&[&[0.0, 1.0], &[-0.1, -0.5]])]).unwrap()
}

fn s2() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[0.0, 1.0], &[-2.0, -1.0]]), from_rows(&[&[0.0, 1.0], &[-9.0, -1.0]])]).unwrap()
}

fn s4() -> SwitchedSystem {
    SwitchedSystem::new(vec![from_rows(&[&[-2.0, 1.0], &[5.0, -3.0]]), from_rows(&[&[0.1, 0.0], &[0.1, 0.2]])]).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn identical_stable_modes_need_no_dwell() {
    let a = from_rows(&[&[-1.0, 2.0], &[0.0, -3.0]]);
    let sys = SwitchedSystem::new(vec![a.clone(), a]).unwrap();
    let opts = SearchOptions::default();
    let r = min_dwell_bisect(&sys, Method::Exponential, &opts).unwrap();
    assert!(r.value <= opts.tol);
    assert_eq!(r.other, None);
}

#[test]
fn s1_exponential_bisection() {
    let r = min_dwell_bisect(&s1(), Method::Exponential, &SearchOptions::default()).unwrap();
    assert!((r.value - 2.7508).abs() <= 1e-2, "{}", r.value);
    assert!(r.value - r.other.unwrap() <= 1e-3);
    assert!(r.non_monotone.is_empty());
    let again = min_dwell_bisect(&s1(), Method::Exponential, &SearchOptions::default()).unwrap();
    assert_eq!(r.value, again.value);
}

#[test]
fn s2_affine_bisection() {
    let r = min_dwell_bisect(&s2(), Method::Affine { degree: 2 }, &SearchOptions::default()).unwrap();
    assert!(rel(r.value, 0.6222) <= 0.01, "{}", r.value);
}

#[test]
fn unstable_mode_is_unbounded() {
    let sys = SwitchedSystem::new(vec![-Matrix::identity(2, 2), Matrix::identity(2, 2) * 0.1]).unwrap();
    let opts = SearchOptions { tol: 1.0, cap: 64.0, ..SearchOptions::default() };
    assert!(matches!(min_dwell_bisect(&sys, Method::Exponential, &opts), Err(DwellError::Search(_))));
}

#[test]
fn s4_upper_dwell() {
    let ranges = vec![DwellRange { tmin: 2.0, tmax: None }, DwellRange { tmin: 0.001, tmax: None }];
    let r = max_upper_dwell(&s4(), 1, &ranges, Method::Affine { degree: 2 }, &SearchOptions::default()).unwrap();
    assert!(rel(r.value, 2.5471) <= 0.01, "{}", r.value);
    let oracle = periodic_critical(&s4(), &[(0, Some(2.0)), (1, None)], PERIODIC_TOL).unwrap();
    assert!(r.value <= oracle + 1e-3);
}

#[test]
fn upper_dwell_empty_range() {
    let sys = SwitchedSystem::new(vec![Matrix::identity(2, 2), -Matrix::identity(2, 2)]).unwrap();
    let ranges = vec![DwellRange { tmin: 1.0, tmax: None }, DwellRange { tmin: 1e-4, tmax: Some(2e-4) }];
    let r = max_upper_dwell(&sys, 0, &ranges, Method::Affine { degree: 1 }, &SearchOptions::default());
    assert!(matches!(r, Err(DwellError::Search(_))));
}

#[test]
fn periodic_oracle() {
    let t = periodic_critical(&s4(), &[(0, Some(1.0)), (1, None)], PERIODIC_TOL).unwrap();
    assert!((t - 1.2847).abs() <= 1e-3, "{t}");
    let t = periodic_critical(&s4(), &[(0, Some(5.0)), (1, None)], PERIODIC_TOL).unwrap();
    assert!((t - 6.2158).abs() <= 1e-3, "{t}");
    let c = [(0, Some(5.0)), (1, Some(t))];
    let r = cycle_spectral_radius(&s4(), &c.map(|(m, d)| (m, d.unwrap()))).unwrap();
    assert!(r < 1.0 + 1e-3);

    let stable = SwitchedSystem::new(vec![-Matrix::identity(2, 2); 2]).unwrap();
    assert!(matches!(periodic_critical(&stable, &[(0, Some(1.0)), (1, None)], PERIODIC_TOL), Err(DwellError::Search(_))));
    assert!(periodic_critical(&stable, &[(0, None), (1, None)], PERIODIC_TOL).is_err());
}

#[test]
fn robust_sweep_small() {
    let ch = UncertaintyChannel { u: from_rows(&[&[0.0], &[1.0]]), v: from_rows(&[&[1.0, 0.0]]), kappa: 0.0 };
    let sys = s2().with_uncertainty(vec![ch.clone(), ch]).unwrap();
    let opts = SearchOptions { tol: 2e-3, ..SearchOptions::default() };
    let table = robust_sweep(&sys, &[0.0, 0.5], &[Method::Affine { degree: 2 }], &opts).unwrap();
    let row = &table.rows[0].values;
    assert!(rel(row[0].unwrap(), 0.6222) <= 0.01);
    assert!(rel(row[1].unwrap(), 0.9288) <= 0.02);
    assert!(row[1].unwrap() >= row[0].unwrap());
    assert!(table.flags.is_empty(), "{:?}", table.flags);
    assert!(robust_sweep(&s2(), &[0.1], &[Method::Exponential], &opts).is_err());
}
