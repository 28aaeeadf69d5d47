//! Solver-independent certificate checks and trajectory-based falsification.
//!
//! Nothing here reads the LMI problem or the Gram matrices: every condition
//! is rebuilt from the system matrices and the raw-time certificate, then
//! sampled on a uniform grid and tested by eigenvalue computation.

mod trajectory;

pub use trajectory::{eval_looped_functional, simulate, write_trace_csv, Jump, Sample, Segment, Trajectory};

use crate::conditions::{
    y_matrices, ConditionOptions, Domain, DwellCertificate, Method, PairPoly, QueryKind, SwitchedSystem,
};
use crate::error::{invalid, mismatch, Result};
use crate::linalg::{block_diag, expm, he, max_abs, min_eig, Matrix};
use serde::{Deserialize, Serialize};

/// Margins at or above `−VERIFY_TOL` pass; boundary residuals must stay
/// below `VERIFY_TOL` relative to the size of `Z`.
pub const VERIFY_TOL: f64 = 1e-6;

pub const DEFAULT_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Smallest eigenvalue, must be `≥ −VERIFY_TOL`.
    Margin,
    /// Relative residual of an equality, must be `≤ VERIFY_TOL`.
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub label: String,
    pub kind: CheckKind,
    pub value: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub entries: Vec<CheckEntry>,
    pub pass: bool,
}

impl VerifyReport {
    fn push_margin(&mut self, label: String, value: f64) {
        let ok = value >= -VERIFY_TOL;
        self.entries.push(CheckEntry { label, kind: CheckKind::Margin, value, ok });
    }

    fn push_residual(&mut self, label: String, value: f64) {
        let ok = value <= VERIFY_TOL;
        self.entries.push(CheckEntry { label, kind: CheckKind::Residual, value, ok });
    }

    /// Smallest margin among the entries whose label starts with `prefix`.
    pub fn worst_margin(&self, prefix: &str) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.kind == CheckKind::Margin && e.label.starts_with(prefix))
            .map(|e| e.value)
            .reduce(f64::min)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.ok)
    }
}

/// Which of the two equivalent discrete-time conditions to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteForm {
    /// `P_i − e^{A_iᵀT} P_j e^{A_iT}`.
    Primal,
    /// `P_j − e^{A_iᵀT} P_i e^{A_iT}`.
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMargin {
    pub i: usize,
    pub j: usize,
    pub margin: f64,
}

fn check_p(sys: &SwitchedSystem, p: &[Matrix]) -> Result<()> {
    if p.len() != sys.num_modes() {
        return mismatch(format!("{} Lyapunov matrices for {} modes", p.len(), sys.num_modes()));
    }
    for (k, m) in p.iter().enumerate() {
        if m.nrows() != sys.n || m.ncols() != sys.n {
            return mismatch(format!("P_{} is {}x{}, state dimension {}", k + 1, m.nrows(), m.ncols(), sys.n));
        }
    }
    Ok(())
}

/// Discrete-time margins for every ordered pair at dwell-time `t`.
pub fn check_discrete_condition(sys: &SwitchedSystem, p: &[Matrix], t: f64, form: DiscreteForm) -> Result<Vec<PairMargin>> {
    check_p(sys, p)?;
    let exps = sys.modes.iter().map(|a| expm(a, t)).collect::<Result<Vec<_>>>()?;
    pair_margins(sys, p, |i| Ok(exps[i].clone()), form)
}

fn pair_margins(sys: &SwitchedSystem, p: &[Matrix], e: impl Fn(usize) -> Result<Matrix>, form: DiscreteForm) -> Result<Vec<PairMargin>> {
    let mut out = Vec::new();
    for (i, j) in sys.pairs() {
        let ei = e(i)?;
        let m = match form {
            DiscreteForm::Primal => &p[i] - ei.transpose() * &p[j] * &ei,
            DiscreteForm::Dual => &p[j] - ei.transpose() * &p[i] * &ei,
        };
        out.push(PairMargin { i, j, margin: min_eig(&m)? });
    }
    Ok(out)
}

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let m = points.max(2) - 1;
    (0..=m).map(move |k| lo + (hi - lo) * k as f64 / m as f64)
}

fn d_n(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let z = Matrix::zeros(n, n);
    block_diag(&[a, &z, &z])
}

/// `Ψ + He(Z D(A)) + ∂Z/∂τ` at one point, for the functional whose first term
/// is `weight · x(τ)ᵀP_i x(τ)`.
fn xi_matrix(a: &Matrix, pi: &Matrix, pj: &Matrix, eps: f64, weight: f64, z: &Matrix, dz: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut m = he(&(z * d_n(a))) + dz;
    let mut top = m.view_mut((0, 0), (n, n));
    top += he(&(pi * a)) * weight;
    let mut mid = m.view_mut((n, n), (n, n));
    mid += pi - pj + Matrix::identity(n, n) * eps;
    m
}

fn boundary_residual(z_end: &Matrix, z_start: &Matrix, n: usize) -> f64 {
    let (y1, y2) = y_matrices(n);
    let r = y2.transpose() * z_end * &y2 - y1.transpose() * z_start * &y1;
    max_abs(&r) / (1.0 + max_abs(z_end).max(max_abs(z_start)))
}

fn tag(i: usize, j: usize) -> String {
    format!("({}, {})", i + 1, j + 1)
}

/// Re-checks every condition behind `cert` for `sys`.
///
/// Polynomial conditions are sampled on `grid_points` uniform points in `τ`
/// (and as many in `T` for box certificates); discrete conditions are
/// recomputed with the matrix exponential at the certificate's dwell-times.
pub fn verify_certificate(sys: &SwitchedSystem, cert: &DwellCertificate, grid_points: usize) -> Result<VerifyReport> {
    check_p(sys, &cert.p)?;
    if grid_points < 2 {
        return invalid("verification grid needs at least 2 points");
    }
    let n = sys.n;
    for z in &cert.z {
        if z.poly.dim != 3 * n || z.poly.vars != z.domain.vars() || z.i >= sys.num_modes() || z.j >= sys.num_modes() {
            return mismatch(format!("Z{} does not match the system", tag(z.i, z.j)));
        }
    }
    let mut rep = VerifyReport { entries: Vec::new(), pass: true };
    for (k, p) in cert.p.iter().enumerate() {
        rep.push_margin(format!("P_{} positive", k + 1), min_eig(p)?);
    }
    if let Some(eps) = cert.eps {
        rep.push_margin("eps positive".into(), eps);
    }
    match (&cert.query.kind, cert.query.method) {
        (QueryKind::MinDwell { tbar }, method) => {
            sys.require_certain()?;
            lyapunov_entries(&mut rep, sys, &cert.p, 0..sys.num_modes())?;
            discrete_entries(&mut rep, sys, &cert.p, *tbar)?;
            if let Method::Affine { .. } = method {
                for (i, j) in sys.pairs() {
                    let z = find_z(cert, i, j)?;
                    interval_entries(&mut rep, sys, cert, z, *tbar, grid_points)?;
                }
            }
        }
        (QueryKind::ModeDependent { ranges }, method) => {
            sys.require_certain()?;
            if ranges.len() != sys.num_modes() {
                return mismatch("dwell ranges do not match the number of modes");
            }
            let unbounded: Vec<usize> = (0..sys.num_modes()).filter(|&i| ranges[i].tmax.is_none()).collect();
            lyapunov_entries(&mut rep, sys, &cert.p, unbounded.into_iter())?;
            for (i, j) in sys.pairs() {
                let r = ranges[i];
                let times: Vec<f64> = match r.tmax {
                    None => vec![r.tmin],
                    Some(tmax) => grid(r.tmin, tmax, grid_points).collect(),
                };
                let mut worst = f64::INFINITY;
                for t in times {
                    let e = expm(&sys.modes[i], t)?;
                    worst = worst.min(min_eig(&(&cert.p[j] - e.transpose() * &cert.p[i] * &e))?);
                }
                rep.push_margin(format!("discrete {}", tag(i, j)), worst);
                if let (Method::Affine { .. }, Some(_)) = (method, r.tmax) {
                    // Unbounded modes are certified by the exact discrete margin above.
                    let z = find_z(cert, i, j)?;
                    match z.domain {
                        Domain::Box { tmin, tmax } => box_entries(&mut rep, sys, cert, z, tmin, tmax, grid_points)?,
                        Domain::Interval { .. } => return mismatch(format!("Z{} has the wrong domain for its dwell range", tag(i, j))),
                    }
                }
            }
        }
        (QueryKind::Robust { tbar, kappa }, Method::Exponential) => {
            let rs = sys.with_kappa(*kappa)?;
            let points = ConditionOptions::default().delta_grid;
            for i in 0..rs.num_modes() {
                let mut lyap = f64::INFINITY;
                for (delta, a) in delta_grid(&rs, i, points)? {
                    lyap = lyap.min(min_eig(&-he(&(&cert.p[i] * &a)))?);
                    let e = expm(&a, *tbar)?;
                    for j in (0..rs.num_modes()).filter(|&j| j != i) {
                        let m = min_eig(&(&cert.p[j] - e.transpose() * &cert.p[i] * &e))?;
                        rep.push_margin(format!("discrete {} at δ = {delta}", tag(i, j)), m);
                    }
                }
                rep.push_margin(format!("Lyapunov mode {} on δ-grid", i + 1), lyap);
            }
        }
        (QueryKind::Robust { tbar, kappa }, Method::Affine { .. }) => {
            let rs = sys.with_kappa(*kappa)?;
            robust_entries(&mut rep, &rs, cert, *tbar, grid_points)?;
        }
    }
    rep.pass = rep.entries.iter().all(|e| e.ok);
    Ok(rep)
}

fn find_z(cert: &DwellCertificate, i: usize, j: usize) -> Result<&PairPoly> {
    cert.z_for(i, j).ok_or_else(|| crate::error::DwellError::DimensionMismatch(format!("certificate has no Z{}", tag(i, j))))
}

fn lyapunov_entries(rep: &mut VerifyReport, sys: &SwitchedSystem, p: &[Matrix], modes: impl Iterator<Item = usize>) -> Result<()> {
    for i in modes {
        rep.push_margin(format!("Lyapunov mode {}", i + 1), min_eig(&-he(&(&p[i] * &sys.modes[i])))?);
    }
    Ok(())
}

fn discrete_entries(rep: &mut VerifyReport, sys: &SwitchedSystem, p: &[Matrix], t: f64) -> Result<()> {
    for pm in check_discrete_condition(sys, p, t, DiscreteForm::Dual)? {
        rep.push_margin(format!("discrete {}", tag(pm.i, pm.j)), pm.margin);
    }
    Ok(())
}

fn interval_entries(rep: &mut VerifyReport, sys: &SwitchedSystem, cert: &DwellCertificate, z: &PairPoly, tbar: f64, points: usize) -> Result<()> {
    let (i, j) = (z.i, z.j);
    if z.poly.vars != 1 {
        return mismatch(format!("Z{} should be univariate", tag(i, j)));
    }
    let eps = cert.eps.unwrap_or(0.0);
    let dz = z.poly.derivative(0);
    let mut worst = f64::INFINITY;
    for t in grid(0.0, tbar, points) {
        let m = xi_matrix(&sys.modes[i], &cert.p[i], &cert.p[j], eps, tbar, &z.poly.eval(&[t])?, &dz.eval(&[t])?);
        worst = worst.min(min_eig(&-m)?);
    }
    rep.push_margin(format!("looped {}", tag(i, j)), worst);
    let r = boundary_residual(&z.poly.eval(&[tbar])?, &z.poly.eval(&[0.0])?, sys.n);
    rep.push_residual(format!("boundary {}", tag(i, j)), r);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn box_entries(rep: &mut VerifyReport, sys: &SwitchedSystem, cert: &DwellCertificate, z: &PairPoly, tmin: f64, tmax: f64, points: usize) -> Result<()> {
    let (i, j) = (z.i, z.j);
    let eps = cert.eps.unwrap_or(0.0);
    let dz = z.poly.derivative(0);
    let (mut worst, mut resid) = (f64::INFINITY, 0.0_f64);
    for big_t in grid(tmin, tmax, points) {
        for t in grid(0.0, big_t, points) {
            let m = xi_matrix(&sys.modes[i], &cert.p[i], &cert.p[j], eps, big_t, &z.poly.eval(&[t, big_t])?, &dz.eval(&[t, big_t])?);
            worst = worst.min(min_eig(&-m)?);
        }
        resid = resid.max(boundary_residual(&z.poly.eval(&[big_t, big_t])?, &z.poly.eval(&[0.0, big_t])?, sys.n));
    }
    rep.push_margin(format!("looped {}", tag(i, j)), worst);
    rep.push_residual(format!("boundary {}", tag(i, j)), resid);
    Ok(())
}

/// Perturbed matrices `F_i + κU_i(δI)V_i` on a uniform `δ`-grid of `[−1, 1]`.
fn delta_grid(sys: &SwitchedSystem, i: usize, points: usize) -> Result<Vec<(f64, Matrix)>> {
    let c = &sys.channels()?[i];
    grid(-1.0, 1.0, points)
        .map(|d| Ok((d, sys.perturbed(i, &(Matrix::identity(c.u.ncols(), c.v.nrows()) * d))?)))
        .collect()
}

fn robust_entries(rep: &mut VerifyReport, sys: &SwitchedSystem, cert: &DwellCertificate, tbar: f64, points: usize) -> Result<()> {
    let n = sys.n;
    let channels = sys.channels()?;
    if cert.mu_const.len() != sys.num_modes() {
        return mismatch("certificate lacks the Lyapunov scalings");
    }
    for (i, f) in sys.modes.iter().enumerate() {
        let u = &channels[i].u * channels[i].kappa;
        let vtv = channels[i].v.transpose() * &channels[i].v;
        let m = u.ncols();
        let mu = cert.mu_const[i];
        let mut blk = Matrix::zeros(n + m, n + m);
        blk.view_mut((0, 0), (n, n)).copy_from(&-(he(&(&cert.p[i] * f)) + vtv * mu));
        let pu = -(&cert.p[i] * &u);
        blk.view_mut((0, n), (n, m)).copy_from(&pu);
        blk.view_mut((n, 0), (m, n)).copy_from(&pu.transpose());
        blk.view_mut((n, n), (m, m)).copy_from(&(Matrix::identity(m, m) * mu));
        rep.push_margin(format!("robust Lyapunov mode {}", i + 1), min_eig(&blk)?);
    }
    let eps = cert.eps.unwrap_or(0.0);
    for (i, j) in sys.pairs() {
        let z = find_z(cert, i, j)?;
        let mu = cert.mu_for(i, j).ok_or_else(|| crate::error::DwellError::DimensionMismatch(format!("certificate has no μ{}", tag(i, j))))?;
        let f = &sys.modes[i];
        let u = &channels[i].u * channels[i].kappa;
        let dv = d_n(&(channels[i].v.transpose() * &channels[i].v));
        let m = u.ncols();
        let dz = z.poly.derivative(0);
        let (mut worst, mut mu_worst) = (f64::INFINITY, f64::INFINITY);
        for t in grid(0.0, tbar, points) {
            let zt = z.poly.eval(&[t])?;
            let mu_t = mu.poly.eval(&[t])?[(0, 0)];
            mu_worst = mu_worst.min(mu_t);
            let xi = xi_matrix(f, &cert.p[i], &cert.p[j], eps, tbar, &zt, &dz.eval(&[t])?) + &dv * mu_t;
            let mut col = zt.columns(0, n).into_owned();
            let mut head = col.view_mut((0, 0), (n, n));
            head += &cert.p[i] * tbar;
            let cu = -(col * &u);
            let mut g = Matrix::zeros(3 * n + m, 3 * n + m);
            g.view_mut((0, 0), (3 * n, 3 * n)).copy_from(&-xi);
            g.view_mut((0, 3 * n), (3 * n, m)).copy_from(&cu);
            g.view_mut((3 * n, 0), (m, 3 * n)).copy_from(&cu.transpose());
            g.view_mut((3 * n, 3 * n), (m, m)).copy_from(&(Matrix::identity(m, m) * mu_t));
            worst = worst.min(min_eig(&g)?);
        }
        rep.push_margin(format!("robust looped {}", tag(i, j)), worst);
        rep.push_margin(format!("mu {} nonnegative", tag(i, j)), mu_worst);
        let r = boundary_residual(&z.poly.eval(&[tbar])?, &z.poly.eval(&[0.0])?, n);
        rep.push_residual(format!("boundary {}", tag(i, j)), r);
    }
    for i in 0..sys.num_modes() {
        for (delta, a) in delta_grid(sys, i, ConditionOptions::default().delta_grid)? {
            let e = expm(&a, tbar)?;
            for j in (0..sys.num_modes()).filter(|&j| j != i) {
                let m = min_eig(&(&cert.p[j] - e.transpose() * &cert.p[i] * &e))?;
                rep.push_margin(format!("discrete {} at δ = {delta}", tag(i, j)), m);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
