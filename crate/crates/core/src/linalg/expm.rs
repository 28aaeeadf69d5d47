//! Matrix exponential by scaling and squaring with the degree-13 diagonal
//! Padé approximant.

use super::{all_finite, norm1, Matrix};
use crate::error::{mismatch, DwellError, Result};

const THETA_13: f64 = 5.371920351148152;
const MAX_SQUARINGS: i32 = 1000;

const B: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{A t}`.
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix> {
    if !a.is_square() {
        return mismatch(format!("expm needs a square matrix, got {}x{}", a.nrows(), a.ncols()));
    }
    if !t.is_finite() || !all_finite(a) {
        return Err(DwellError::NumericRange("expm argument is not finite".into()));
    }
    let n = a.nrows();
    let at = a * t;
    let norm = norm1(&at);
    if !norm.is_finite() {
        return Err(DwellError::NumericRange("‖At‖ overflows".into()));
    }
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    if s > MAX_SQUARINGS {
        return Err(DwellError::NumericRange(format!("‖At‖₁ = {norm:e} exceeds the squaring budget")));
    }
    let x = at * 2f64.powi(-s);
    let id = Matrix::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let u_inner = &x6 * (&x6 * B[13] + &x4 * B[11] + &x2 * B[9]) + &x6 * B[7] + &x4 * B[5] + &x2 * B[3] + &id * B[1];
    let u = &x * u_inner;
    let v = &x6 * (&x6 * B[12] + &x4 * B[10] + &x2 * B[8]) + &x6 * B[6] + &x4 * B[4] + &x2 * B[2] + &id * B[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| DwellError::NumericRange("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
        if !all_finite(&r) {
            return Err(DwellError::NumericRange("overflow while squaring".into()));
        }
    }
    if !all_finite(&r) {
        return Err(DwellError::NumericRange("expm result is not finite".into()));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;
    use proptest::prelude::*;

    /// Taylor series of e^{X/2^k} with 30 terms, then k squarings.
    fn taylor_expm(a: &Matrix, t: f64) -> Matrix {
        let n = a.nrows();
        let k = 6;
        let x = a * (t / 2f64.powi(k));
        let mut term = Matrix::identity(n, n);
        let mut sum = term.clone();
        for j in 1..30 {
            term = &term * &x / j as f64;
            sum += &term;
        }
        for _ in 0..k {
            sum = &sum * &sum;
        }
        sum
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&Matrix::zeros(2, 2), 1.0).unwrap(), Matrix::identity(2, 2));
    }

    #[test]
    fn diagonal_exact() {
        let e = expm(&from_rows(&[&[-1.0, 0.0], &[0.0, -2.0]]), 1.0).unwrap();
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn matches_taylor_oracle() {
        let a = from_rows(&[&[0.0, 1.0], &[-10.0, -1.0]]);
        let e = expm(&a, 1.0).unwrap();
        assert!(rel_err(&e, &taylor_expm(&a, 1.0)) < 1e-9);
    }

    #[test]
    fn rotation_generator() {
        let a = from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let th = 0.7;
        let e = expm(&a, th).unwrap();
        assert!((e[(0, 0)] - th.cos()).abs() < 1e-14);
        assert!((e[(1, 0)] - th.sin()).abs() < 1e-14);
    }

    #[test]
    fn overflow_reported() {
        let a = from_rows(&[&[1.0]]);
        assert!(matches!(expm(&a, 1e6), Err(DwellError::NumericRange(_))));
        assert!(expm(&a, f64::INFINITY).is_err());
        assert!(expm(&Matrix::zeros(2, 3), 1.0).is_err());
    }

    fn mat3() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, 9).prop_map(|v| {
            let m = Matrix::from_vec(3, 3, v);
            let f = m.norm();
            if f > 0.0 { m * (5.0 * 0.999 / f.max(1.0)) } else { m }
        })
    }

    proptest! {
        #[test]
        fn group_property(a in mat3(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let lhs = expm(&a, s).unwrap() * expm(&a, t).unwrap();
            let rhs = expm(&a, s + t).unwrap();
            prop_assert!(rel_err(&lhs, &rhs) < 1e-8);
        }

        #[test]
        fn inverse_property(a in mat3(), t in 0.0f64..1.0) {
            let prod = expm(&a, t).unwrap() * expm(&-&a, t).unwrap();
            prop_assert!((prod - Matrix::identity(3, 3)).norm() < 1e-8);
        }

        #[test]
        fn taylor_agreement(a in mat3(), t in 0.0f64..2.0) {
            prop_assert!(rel_err(&expm(&a, t).unwrap(), &taylor_expm(&a, t)) < 1e-8);
        }
    }
}
