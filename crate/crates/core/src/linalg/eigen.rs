//! Eigenvalues of a general real matrix: Householder reduction to upper
//! Hessenberg form, then the Francis double-shift QR sweep.

use super::{all_finite, Matrix};
use crate::error::{mismatch, DwellError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(Eigenvalue::modulus).fold(0.0, f64::max))
}

/// All (possibly complex) eigenvalues, unordered.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Eigenvalue>> {
    if !m.is_square() {
        return mismatch(format!("eigenvalues need a square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    if !all_finite(m) {
        return Err(DwellError::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let h = hessenberg(m);
    // 1-based padded copy so the sweep reads like its textbook form.
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = h[(i, j)];
        }
    }
    let (wr, wi) = hqr(&mut a, n)?;
    Ok((1..=n).map(|k| Eigenvalue { re: wr[k], im: wi[k] }).collect())
}

fn hessenberg(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let mut h = m.clone();
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<f64> = (0..len).map(|i| h[(k + 1 + i, k)]).collect();
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vn2: f64 = v.iter().map(|x| x * x).sum();
        if vn2 == 0.0 {
            continue;
        }
        // H <- (I - 2vvᵀ/vᵀv) H (I - 2vvᵀ/vᵀv)
        for j in 0..n {
            let dot: f64 = (0..len).map(|i| v[i] * h[(k + 1 + i, j)]).sum();
            let f = 2.0 * dot / vn2;
            for i in 0..len {
                h[(k + 1 + i, j)] -= f * v[i];
            }
        }
        for i in 0..n {
            let dot: f64 = (0..len).map(|j| h[(i, k + 1 + j)] * v[j]).sum();
            let f = 2.0 * dot / vn2;
            for j in 0..len {
                h[(i, k + 1 + j)] -= f * v[j];
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = 0.0;
        }
    }
    h
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(unused_assignments)]
fn hqr(a: &mut [Vec<f64>], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const MAX_ITS: usize = 60;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    let (mut p, mut q, mut r, mut s, mut w, mut x, mut y, mut z) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nnu = nn as usize;
            let mut l = nnu;
            while l >= 2 {
                s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nnu][nnu];
            if l == nnu {
                wr[nnu] = x + t;
                wi[nnu] = 0.0;
                nn -= 1;
            } else {
                y = a[nnu - 1][nnu - 1];
                w = a[nnu][nnu - 1] * a[nnu - 1][nnu];
                if l == nnu - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nnu - 1] = x + z;
                        wr[nnu] = x + z;
                        if z != 0.0 {
                            wr[nnu] = x - w / z;
                        }
                        wi[nnu - 1] = 0.0;
                        wi[nnu] = 0.0;
                    } else {
                        wr[nnu - 1] = x + p;
                        wr[nnu] = x + p;
                        wi[nnu - 1] = -z;
                        wi[nnu] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITS {
                        let estimate = (1..=n)
                            .map(|k| wr[k].hypot(wi[k]))
                            .chain((1..=nnu).map(|k| a[k][k].abs()))
                            .fold(0.0, f64::max);
                        return Err(DwellError::NonConvergence {
                            message: "Hessenberg QR sweep".into(),
                            estimate,
                        });
                    }
                    if its == 10 || its == 20 {
                        t += x;
                        for i in 1..=nnu {
                            a[i][i] -= x;
                        }
                        s = a[nnu][nnu - 1].abs() + a[nnu - 1][nnu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nnu - 2;
                    loop {
                        z = a[m][m];
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r - s;
                        r = a[m + 2][m + 1];
                        s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nnu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k + 1 <= nnu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nnu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nnu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nnu - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = nnu.min(k + 3);
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nnu - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l as isize >= nn - 1 {
                break;
            }
        }
    }
    Ok((wr, wi))
}
