//! Primal-dual path-following method for the standard-form SDP
//! `min ⟨C,X⟩  s.t.  ⟨A_i,X⟩ = b_i,  X ⪰ 0` with the HKM search direction
//! and Mehrotra predictor-corrector steps.

use crate::linalg::{sym_eig, Matrix, Vector};
use nalgebra::Cholesky;

pub(crate) struct StdSdp {
    pub sizes: Vec<usize>,
    /// `a[i][blk]`; `None` marks an all-zero block of row i.
    pub a: Vec<Vec<Option<Matrix>>>,
    pub c: Vec<Matrix>,
    pub b: Vector,
}

pub(crate) struct IpmOutcome {
    pub x: Vec<Matrix>,
    pub iterations: usize,
    pub converged: bool,
    pub pobj: f64,
    pub message: String,
}

pub(crate) struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
}

const STALL_WINDOW: usize = 30;

fn inner(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

impl StdSdp {
    fn apply(&self, x: &[Matrix]) -> Vector {
        Vector::from_iterator(
            self.a.len(),
            self.a.iter().map(|row| row.iter().zip(x).map(|(ai, xb)| ai.as_ref().map_or(0.0, |a| a.dot(xb))).sum()),
        )
    }

    fn adjoint(&self, lam: &Vector) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = self.sizes.iter().map(|&n| Matrix::zeros(n, n)).collect();
        for (i, row) in self.a.iter().enumerate() {
            let l = lam[i];
            if l == 0.0 {
                continue;
            }
            for (ob, ai) in out.iter_mut().zip(row) {
                if let Some(a) = ai {
                    *ob += a * l;
                }
            }
        }
        out
    }

    fn schur(&self, x: &[Matrix], sinv: &[Matrix]) -> Matrix {
        let m = self.a.len();
        let mut mm = Matrix::zeros(m, m);
        for (blk, (xb, sb)) in x.iter().zip(sinv).enumerate() {
            let rows: Vec<usize> = (0..m).filter(|&i| self.a[i][blk].is_some()).collect();
            for (jj, &j) in rows.iter().enumerate() {
                let aj = self.a[j][blk].as_ref().unwrap();
                let t = xb * aj * sb;
                for &i in &rows[..=jj] {
                    let v = self.a[i][blk].as_ref().unwrap().dot(&t);
                    mm[(i, j)] += v;
                }
            }
        }
        for j in 0..m {
            for i in 0..j {
                mm[(j, i)] = mm[(i, j)];
            }
        }
        mm
    }
}

/// Largest step `α ≤ 1/0` keeping `X + α ΔX ⪰ 0` (∞ when unbounded).
fn max_step(x: &[Matrix], dx: &[Matrix]) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        let l = Cholesky::new(xb.clone())?.l();
        let y = l.solve_lower_triangular(db)?;
        let z = l.solve_lower_triangular(&y.transpose())?;
        let lmin = sym_eig(&sym(&z)).ok()?.values[0];
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    Some(alpha)
}

fn solve_schur(m: &Matrix, rhs: &Vector) -> Option<Vector> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        let mut sol = ch.solve(rhs);
        // One refinement step recovers accuracy lost to conditioning.
        let r = rhs - m * &sol;
        sol += ch.solve(&r);
        return Some(sol);
    }
    let shift = 1e-13 * (1.0 + m.diagonal().amax());
    let mut reg = m.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += shift;
    }
    if let Some(ch) = Cholesky::new(reg) {
        let mut sol = ch.solve(rhs);
        for _ in 0..3 {
            let r = rhs - m * &sol;
            sol += ch.solve(&r);
        }
        return Some(sol);
    }
    m.clone().lu().solve(rhs)
}

pub(crate) fn solve(p: &StdSdp, st: &IpmSettings) -> IpmOutcome {
    let nb = p.sizes.len();
    let ntot: usize = p.sizes.iter().sum();
    let m = p.a.len();
    // Initial point in the style of SDPT3.
    let mut x: Vec<Matrix> = Vec::with_capacity(nb);
    let mut s: Vec<Matrix> = Vec::with_capacity(nb);
    for blk in 0..nb {
        let n = p.sizes[blk] as f64;
        let mut xi = 10.0_f64.max(n.sqrt());
        let mut eta = 10.0_f64.max(n.sqrt()).max(p.c[blk].norm());
        for i in 0..m {
            if let Some(a) = &p.a[i][blk] {
                let an = a.norm();
                xi = xi.max(n * (1.0 + p.b[i].abs()) / (1.0 + an));
                eta = eta.max(an);
            }
        }
        x.push(Matrix::identity(p.sizes[blk], p.sizes[blk]) * xi);
        s.push(Matrix::identity(p.sizes[blk], p.sizes[blk]) * eta);
    }
    let mut lam = Vector::zeros(m);
    let bnorm = p.b.norm();
    let cnorm = p.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();

    let mut best_merit = f64::INFINITY;
    let mut best_x = x.clone();
    let mut best_pobj = inner(&p.c, &x);
    let mut stall = 0;
    let mut message = String::from("iteration limit");
    let mut converged = false;
    let mut iters = 0;

    for it in 0..st.max_iter {
        iters = it;
        let ax = p.apply(&x);
        let rp = &p.b - &ax;
        let at = p.adjoint(&lam);
        let rd: Vec<Matrix> = (0..nb).map(|k| &p.c[k] - &s[k] - &at[k]).collect();
        let pobj = inner(&p.c, &x);
        let dobj = p.b.dot(&lam);
        let xs = inner(&x, &s);
        let mu = xs / ntot as f64;
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + cnorm);
        let gap = xs.abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = pinf.max(dinf).max(gap);
        if pinf <= st.tol * 10.0 && merit <= best_merit {
            best_x = x.clone();
            best_pobj = pobj;
        }
        if merit < best_merit * 0.99 {
            best_merit = merit;
            stall = 0;
        } else {
            stall += 1;
        }
        log::trace!("ipm it {it}: pobj {pobj:.10e} dobj {dobj:.10e} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e}");
        if pinf <= st.tol && dinf <= st.tol && gap <= st.tol {
            converged = true;
            best_x = x.clone();
            best_pobj = pobj;
            message = "converged".into();
            break;
        }
        if stall >= STALL_WINDOW {
            message = "merit stagnation".into();
            break;
        }

        let mut sinv = Vec::with_capacity(nb);
        for sb in &s {
            match Cholesky::new(sb.clone()) {
                Some(ch) => sinv.push(sym(&ch.inverse())),
                None => {
                    message = "dual iterate lost definiteness".into();
                    return finish(best_x, iters, converged, best_pobj, message);
                }
            }
        }
        let mm = p.schur(&x, &sinv);
        let xrs: Vec<Matrix> = (0..nb).map(|k| &x[k] * &rd[k] * &sinv[k]).collect();
        let a_xrs = p.apply(&xrs);

        // Predictor.
        let rhs_a = &p.b + &a_xrs;
        let Some(dl_a) = solve_schur(&mm, &rhs_a) else {
            message = "Schur complement singular".into();
            break;
        };
        let at_dl = p.adjoint(&dl_a);
        let ds_a: Vec<Matrix> = (0..nb).map(|k| &rd[k] - &at_dl[k]).collect();
        let dx_a: Vec<Matrix> = (0..nb).map(|k| -&x[k] - sym(&(&x[k] * &ds_a[k] * &sinv[k]))).collect();
        let (Some(ap), Some(ad)) = (max_step(&x, &dx_a), max_step(&s, &ds_a)) else {
            message = "iterate lost definiteness".into();
            break;
        };
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let xa: Vec<Matrix> = (0..nb).map(|k| &x[k] + &dx_a[k] * ap).collect();
        let sa: Vec<Matrix> = (0..nb).map(|k| &s[k] + &ds_a[k] * ad).collect();
        let mu_aff = inner(&xa, &sa) / ntot as f64;
        let ratio = (mu_aff / mu).max(0.0);
        let sigma = ratio.powi(if ap.min(ad) > 0.2 { 3 } else { 2 }).min(1.0);

        // Corrector.
        let corr: Vec<Matrix> = (0..nb).map(|k| &dx_a[k] * &ds_a[k] * &sinv[k]).collect();
        let a_sinv = p.apply(&sinv);
        let a_corr = p.apply(&corr);
        let rhs = &p.b - a_sinv * (sigma * mu) + &a_xrs + a_corr;
        let Some(dl) = solve_schur(&mm, &rhs) else {
            message = "Schur complement singular".into();
            break;
        };
        let at_dl = p.adjoint(&dl);
        let ds: Vec<Matrix> = (0..nb).map(|k| &rd[k] - &at_dl[k]).collect();
        let dx: Vec<Matrix> = (0..nb)
            .map(|k| &sinv[k] * (sigma * mu) - &x[k] - sym(&(&x[k] * &ds[k] * &sinv[k])) - sym(&corr[k]))
            .collect();
        let (Some(ap), Some(ad)) = (max_step(&x, &dx), max_step(&s, &ds)) else {
            message = "iterate lost definiteness".into();
            break;
        };
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            message = "step length collapsed".into();
            break;
        }
        for k in 0..nb {
            x[k] = sym(&(&x[k] + &dx[k] * ap));
            s[k] = sym(&(&s[k] + &ds[k] * ad));
        }
        lam += dl * ad;
        iters = it + 1;
    }
    finish(best_x, iters, converged, best_pobj, message)
}

fn finish(x: Vec<Matrix>, iterations: usize, converged: bool, pobj: f64, message: String) -> IpmOutcome {
    IpmOutcome { x, iterations, converged, pobj, message }
}
