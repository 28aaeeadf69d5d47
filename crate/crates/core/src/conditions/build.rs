//! Problem builders for the exponential, looped-functional and robust conditions.

use super::{ConditionOptions, Domain, DwellRange, Layout, MuSlot, SwitchedSystem, ZSlot, Built};
use crate::error::{invalid, mismatch, Result};
use crate::linalg::{block_diag, expm, Matrix};
use crate::polymat::affine::{AffPoly, LinForm, LinMat, ProblemBuilder};
use crate::polymat::sos::{box_psd, interval_psd, BoxOptions};
use crate::polymat::Exponent;

/// Lower bound imposed on `ε`.
pub const EPS_FLOOR: f64 = 1e-6;

/// `(Y₁, Y₂)` of the looping condition, both `3n × 2n`.
pub fn y_matrices(n: usize) -> (Matrix, Matrix) {
    let mut y1 = Matrix::zeros(3 * n, 2 * n);
    let mut y2 = Matrix::zeros(3 * n, 2 * n);
    for k in 0..n {
        y1[(k, k)] = 1.0;
        y1[(n + k, k)] = 1.0;
        y1[(2 * n + k, n + k)] = 1.0;
        y2[(k, n + k)] = 1.0;
        y2[(n + k, k)] = 1.0;
        y2[(2 * n + k, n + k)] = 1.0;
    }
    (y1, y2)
}

fn d_n(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let z = Matrix::zeros(n, n);
    block_diag(&[a, &z, &z])
}

fn sandwich(m: &LinMat, y: &Matrix) -> LinMat {
    m.mul_right(y).mul_left(&y.transpose())
}

fn upper_entries(m: &LinMat) -> Vec<LinForm> {
    let mut out = Vec::new();
    for j in 0..m.cols {
        for i in 0..=j {
            out.push(m.get(i, j).clone());
        }
    }
    out
}

/// Affine forms whose vanishing is the looping condition
/// `Y₂ᵀ Z(T) Y₂ = Y₁ᵀ Z(0) Y₁` for `Z` stored in the scaled variables of
/// `domain`; for a box the identity is imposed coefficientwise in `T`.
pub fn boundary_constraint(z: &AffPoly, n: usize, domain: &Domain) -> Result<Vec<LinForm>> {
    if z.rows != 3 * n || z.cols != 3 * n {
        return mismatch(format!("looping condition needs a {0}x{0} polynomial, got {1}x{2}", 3 * n, z.rows, z.cols));
    }
    let (y1, y2) = y_matrices(n);
    let zero = LinMat::zeros(3 * n, 3 * n);
    match domain {
        Domain::Interval { .. } => {
            let (mut end, mut start) = (zero.clone(), zero);
            for (e, m) in &z.coeffs {
                end.add_scaled(m, 1.0);
                start.add_scaled(m, if e[0] % 2 == 0 { 1.0 } else { -1.0 });
            }
            let mut diff = sandwich(&end, &y2);
            diff.add_scaled(&sandwich(&start, &y1), -1.0);
            Ok(upper_entries(&diff))
        }
        Domain::Box { .. } => {
            let top = z.coeffs.keys().map(|e| e[0] + e[1]).max().unwrap_or(0);
            let mut out = Vec::new();
            for c in 0..=top {
                let mut diag = zero.clone();
                for (e, m) in &z.coeffs {
                    if e[0] + e[1] == c {
                        diag.add_scaled(m, 1.0);
                    }
                }
                let mut diff = sandwich(&diag, &y2);
                if let Some(m) = z.coeffs.get(&[0, c]) {
                    diff.add_scaled(&sandwich(m, &y1), -1.0);
                }
                out.extend(upper_entries(&diff));
            }
            Ok(out)
        }
    }
}

struct Ctx {
    n: usize,
    b: ProblemBuilder,
    layout: Layout,
    p: Vec<LinMat>,
}

impl Ctx {
    fn new(sys: &SwitchedSystem) -> Self {
        let n = sys.n;
        let mut b = ProblemBuilder::new();
        let mut layout = Layout { n, ..Layout::default() };
        let mut p = Vec::new();
        let mut trace = LinForm::constant(-((sys.num_modes() * n) as f64));
        for i in 0..sys.num_modes() {
            let (m, vars) = b.sym_matrix(n, &format!("P_{}", i + 1));
            b.add_block(&m, format!("P_{} ≻ 0", i + 1));
            for k in 0..n {
                trace.add_scaled(m.get(k, k), 1.0);
            }
            layout.p.push(vars);
            p.push(m);
        }
        b.add_equality(&trace);
        Ctx { n, b, layout, p }
    }

    fn eps(&mut self) -> LinForm {
        let k = self.b.new_var("eps");
        self.layout.eps = Some(k);
        let f = LinForm::var(k);
        let mut blk = LinMat::zeros(1, 1);
        *blk.get_mut(0, 0) = f.clone();
        blk.get_mut(0, 0).constant = -EPS_FLOOR;
        self.b.add_block(&blk, "eps ≥ floor");
        f
    }

    /// `−(AᵀP_i + P_iA) ⪰ 0`.
    fn lyapunov(&mut self, i: usize, a: &Matrix) {
        let blk = self.p[i].mul_right(a).he().scaled(-1.0);
        self.b.add_block(&blk, format!("Lyapunov mode {}", i + 1));
    }

    /// `P_outer − Eᵀ P_inner E ⪰ 0`.
    fn discrete(&mut self, inner: usize, outer: usize, e: &Matrix, label: String) {
        let mut blk = self.p[outer].clone();
        blk.add_scaled(&self.p[inner].mul_right(e).mul_left(&e.transpose()), -1.0);
        self.b.add_block(&blk, label);
    }

    fn z_poly(&mut self, i: usize, j: usize, exps: &[Exponent], domain: Domain) -> AffPoly {
        let dim = 3 * self.n;
        let mut z = AffPoly::zero(dim, dim);
        let mut coeffs = Vec::new();
        for e in exps {
            let (m, vars) = self.b.sym_matrix(dim, &format!("Z_{}{} coeff {:?}", i + 1, j + 1, e));
            z.add_term(*e, &m, 1.0);
            coeffs.push((*e, vars));
        }
        self.layout.z.push(ZSlot { i, j, domain, coeffs });
        z
    }

    /// `Ψ_ij` with its `(1,1)` block `He(P_iA_i)` placed at monomial `lyap_exp` with weight `lyap_scale`.
    fn psi(&self, i: usize, j: usize, a: &Matrix, eps: &LinForm, lyap_exp: Exponent, lyap_scale: f64) -> AffPoly {
        let n = self.n;
        let mut top = LinMat::zeros(3 * n, 3 * n);
        top.add_block(0, 0, &self.p[i].mul_right(a).he(), lyap_scale);
        let mut mid = LinMat::zeros(3 * n, 3 * n);
        mid.add_block(n, n, &self.p[i], 1.0);
        mid.add_block(n, n, &self.p[j], -1.0);
        mid.add_block(n, n, &LinMat::identity_times(n, eps), 1.0);
        let mut psi = AffPoly::zero(3 * n, 3 * n);
        psi.add_term(lyap_exp, &top, 1.0);
        psi.add_term([0, 0], &mid, 1.0);
        psi
    }

    fn finish(self) -> Built {
        Built { problem: self.b.finish(), layout: self.layout }
    }
}

fn check_tbar(tbar: f64) -> Result<()> {
    if !(tbar > 0.0) || !tbar.is_finite() {
        return invalid(format!("dwell-time must be positive and finite, got {tbar}"));
    }
    Ok(())
}

fn check_degree(d: u32) -> Result<()> {
    if d < 1 {
        return invalid("degree of Z must be at least 1");
    }
    Ok(())
}

/// Exponential conditions at a single dwell-time. `dual` selects
/// `P_j − E_iᵀP_iE_i ≻ 0`, otherwise `P_i − E_iᵀP_jE_i ≻ 0`, with `E_i = e^{A_iT̄}`.
pub fn build_exp_min_dwell(sys: &SwitchedSystem, tbar: f64, dual: bool) -> Result<Built> {
    sys.require_certain()?;
    check_tbar(tbar)?;
    let mut ctx = Ctx::new(sys);
    for (i, a) in sys.modes.iter().enumerate() {
        ctx.lyapunov(i, a);
    }
    let exps: Vec<Matrix> = sys.modes.iter().map(|a| expm(a, tbar)).collect::<Result<_>>()?;
    for (i, j) in sys.pairs() {
        let label = format!("discrete ({}, {})", i + 1, j + 1);
        if dual {
            ctx.discrete(i, j, &exps[i], label);
        } else {
            ctx.discrete(j, i, &exps[i], label);
        }
    }
    Ok(ctx.finish())
}

fn check_ranges(sys: &SwitchedSystem, ranges: &[DwellRange]) -> Result<()> {
    if ranges.len() != sys.num_modes() {
        return mismatch(format!("{} dwell ranges for {} modes", ranges.len(), sys.num_modes()));
    }
    ranges.iter().try_for_each(DwellRange::validate)
}

/// Gridded mode-dependent exponential conditions. Bounded ranges are only
/// sampled, so this is a necessary-condition oracle, not a certificate.
/// Unbounded ranges use the minimum dwell plus the Lyapunov condition.
pub fn build_exp_mode_dependent(sys: &SwitchedSystem, ranges: &[DwellRange], grid_density: usize) -> Result<Built> {
    sys.require_certain()?;
    check_ranges(sys, ranges)?;
    if grid_density < 2 {
        return invalid("grid density must be at least 2");
    }
    let mut ctx = Ctx::new(sys);
    for (i, (a, r)) in sys.modes.iter().zip(ranges).enumerate() {
        let times: Vec<f64> = match r.tmax {
            None => {
                ctx.lyapunov(i, a);
                vec![r.tmin]
            }
            Some(tmax) => (0..grid_density).map(|k| r.tmin + (tmax - r.tmin) * k as f64 / (grid_density - 1) as f64).collect(),
        };
        for t in times {
            let e = expm(a, t)?;
            for j in (0..sys.num_modes()).filter(|&j| j != i) {
                ctx.discrete(i, j, &e, format!("discrete ({}, {}) at T = {t}", i + 1, j + 1));
            }
        }
    }
    Ok(ctx.finish())
}

/// `−[Ψ + He(Z D(A)) + w ∂Z/∂v₁] ⪰ 0` as a polynomial.
fn looped_poly(psi: &AffPoly, z: &AffPoly, a: &Matrix, dwt: f64) -> AffPoly {
    let da = d_n(a);
    let mut g = psi.clone();
    g.add_scaled(&z.map(|m| m.mul_right(&da).he()), 1.0);
    g.add_scaled(&z.derivative(0), dwt);
    g.map(|m| m.scaled(-1.0))
}

fn univariate_exps(d: u32) -> Vec<Exponent> {
    (0..=d).map(|k| [k, 0]).collect()
}

fn bivariate_exps(d: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    for total in 0..=d {
        for a in (0..=total).rev() {
            out.push([a, total - a]);
        }
    }
    out
}

/// Adds the interval looped-functional condition for pair `(i, j)` at `T̄`.
fn add_interval_pair(ctx: &mut Ctx, i: usize, j: usize, a: &Matrix, tbar: f64, d: u32, eps: &LinForm, opts: &ConditionOptions) -> Result<()> {
    let domain = Domain::Interval { tbar };
    let z = ctx.z_poly(i, j, &univariate_exps(d), domain);
    for f in boundary_constraint(&z, ctx.n, &domain)? {
        ctx.b.add_equality(&f);
    }
    let psi = ctx.psi(i, j, a, eps, [0, 0], tbar);
    let g = looped_poly(&psi, &z, a, 2.0 / tbar);
    let grams = interval_psd(&mut ctx.b, &g, opts.mult_degree, &format!("looped ({}, {})", i + 1, j + 1))?;
    ctx.layout.grams.extend(grams);
    Ok(())
}

/// Looped-functional conditions with polynomial `Z_ij` of degree `d`.
pub fn build_affine_min_dwell(sys: &SwitchedSystem, tbar: f64, d: u32, opts: &ConditionOptions) -> Result<Built> {
    sys.require_certain()?;
    check_tbar(tbar)?;
    check_degree(d)?;
    let mut ctx = Ctx::new(sys);
    let eps = ctx.eps();
    for (i, a) in sys.modes.iter().enumerate() {
        ctx.lyapunov(i, a);
    }
    for (i, j) in sys.pairs() {
        add_interval_pair(&mut ctx, i, j, &sys.modes[i], tbar, d, &eps, opts)?;
    }
    Ok(ctx.finish())
}

/// Mode-dependent looped-functional conditions. Bounded modes get `Z_ij(τ, T)`
/// of total degree `d` on the box. Unbounded modes need only the exact discrete
/// condition at `T_min`, which is a plain LMI in `P`, plus their Lyapunov
/// condition; they carry no `Z`.
pub fn build_affine_mode_dependent(sys: &SwitchedSystem, ranges: &[DwellRange], d: u32, opts: &ConditionOptions) -> Result<Built> {
    sys.require_certain()?;
    check_ranges(sys, ranges)?;
    check_degree(d)?;
    let mut ctx = Ctx::new(sys);
    let eps = ctx.eps();
    for (i, (a, r)) in sys.modes.iter().zip(ranges).enumerate() {
        if r.tmax.is_none() {
            ctx.lyapunov(i, a);
        }
    }
    for (i, j) in sys.pairs() {
        let a = &sys.modes[i];
        let r = ranges[i];
        match r.tmax {
            None => {
                let e = expm(a, r.tmin)?;
                ctx.discrete(i, j, &e, format!("discrete ({}, {}) at T = {}", i + 1, j + 1, r.tmin));
            }
            Some(tmax) => {
                let domain = Domain::Box { tmin: r.tmin, tmax };
                let z = ctx.z_poly(i, j, &bivariate_exps(d), domain);
                for f in boundary_constraint(&z, ctx.n, &domain)? {
                    ctx.b.add_equality(&f);
                }
                let psi = ctx.psi(i, j, a, &eps, [0, 1], tmax);
                let g = looped_poly(&psi, &z, a, 1.0 / tmax);
                let bo = BoxOptions { mult_degree: opts.mult_degree, product_term: opts.product_term };
                let grams = box_psd(&mut ctx.b, &g, r.tmin / tmax, bo, &format!("looped ({}, {})", i + 1, j + 1))?;
                ctx.layout.grams.extend(grams);
            }
        }
    }
    Ok(ctx.finish())
}

fn scalar_times(f: &LinForm, m: &Matrix) -> LinMat {
    let mut out = LinMat::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] != 0.0 {
                out.get_mut(i, j).add_scaled(f, m[(i, j)]);
            }
        }
    }
    out
}

/// Robust looped-functional conditions for `A_i = F_i + κU_iΔ_iV_i`;
/// `κ` is taken from the system's channels and folded into `U_i`.
pub fn build_robust_min_dwell(sys: &SwitchedSystem, tbar: f64, d: u32, opts: &ConditionOptions) -> Result<Built> {
    check_tbar(tbar)?;
    check_degree(d)?;
    let channels = sys.channels()?.to_vec();
    let n = sys.n;
    let mut ctx = Ctx::new(sys);
    let eps = ctx.eps();
    let us: Vec<Matrix> = channels.iter().map(|c| &c.u * c.kappa).collect();
    let vtv: Vec<Matrix> = channels.iter().map(|c| c.v.transpose() * &c.v).collect();
    for (i, f) in sys.modes.iter().enumerate() {
        let m = us[i].ncols();
        let mu = ctx.b.new_var(format!("mu_{}", i + 1));
        ctx.layout.mu_const.push(mu);
        let muf = LinForm::var(mu);
        let mut topleft = ctx.p[i].mul_right(f).he();
        topleft.add_scaled(&scalar_times(&muf, &vtv[i]), 1.0);
        let mut blk = LinMat::zeros(n + m, n + m);
        blk.add_block(0, 0, &topleft, -1.0);
        let pu = ctx.p[i].mul_right(&us[i]);
        blk.add_block(0, n, &pu, -1.0);
        blk.add_block(n, 0, &pu.transpose(), -1.0);
        blk.add_block(n, n, &LinMat::identity_times(m, &muf), 1.0);
        ctx.b.add_block(&blk, format!("robust Lyapunov mode {}", i + 1));
    }
    let mu_deg = opts.mu_degree.unwrap_or(d + d % 2);
    let domain = Domain::Interval { tbar };
    for (i, j) in sys.pairs() {
        let f = &sys.modes[i];
        let m = us[i].ncols();
        let tag = format!("({}, {})", i + 1, j + 1);
        let z = ctx.z_poly(i, j, &univariate_exps(d), domain);
        for row in boundary_constraint(&z, n, &domain)? {
            ctx.b.add_equality(&row);
        }
        let mut mu = AffPoly::zero(1, 1);
        let mut mu_coeffs = Vec::new();
        for k in 0..=mu_deg {
            let v = ctx.b.new_var(format!("mu_{}{} coeff {k}", i + 1, j + 1));
            let mut c = LinMat::zeros(1, 1);
            *c.get_mut(0, 0) = LinForm::var(v);
            mu.add_term([k, 0], &c, 1.0);
            mu_coeffs.push(([k, 0], v));
        }
        ctx.layout.mu_poly.push(MuSlot { i, j, domain, coeffs: mu_coeffs });
        let grams = interval_psd(&mut ctx.b, &mu, None, &format!("mu {tag} ≥ 0"))?;
        ctx.layout.grams.extend(grams);

        // Ξ¹ and the uncertainty column, negated.
        let psi = ctx.psi(i, j, f, &eps, [0, 0], tbar);
        let neg_xi = {
            let mut g = looped_poly(&psi, &z, f, 2.0 / tbar);
            let dv = d_n(&vtv[i]);
            g.add_scaled(&mu.map(|c| scalar_times(c.get(0, 0), &dv)), -1.0);
            g
        };
        let mut col = z.map(|c| c.block(0, 0, 3 * n, n));
        let mut tp = LinMat::zeros(3 * n, n);
        tp.add_block(0, 0, &ctx.p[i], tbar);
        col.add_term([0, 0], &tp, 1.0);
        let col_u = col.map(|c| c.mul_right(&us[i]));

        let dim = 3 * n + m;
        let mut g = AffPoly::zero(dim, dim);
        for (e, c) in &neg_xi.coeffs {
            let mut blk = LinMat::zeros(dim, dim);
            blk.add_block(0, 0, c, 1.0);
            g.add_term(*e, &blk, 1.0);
        }
        for (e, c) in &col_u.coeffs {
            let mut blk = LinMat::zeros(dim, dim);
            blk.add_block(0, 3 * n, c, -1.0);
            blk.add_block(3 * n, 0, &c.transpose(), -1.0);
            g.add_term(*e, &blk, 1.0);
        }
        for (e, c) in &mu.coeffs {
            let mut blk = LinMat::zeros(dim, dim);
            blk.add_block(3 * n, 3 * n, &LinMat::identity_times(m, c.get(0, 0)), 1.0);
            g.add_term(*e, &blk, 1.0);
        }
        let grams = interval_psd(&mut ctx.b, &g, opts.mult_degree, &format!("robust looped {tag}"))?;
        ctx.layout.grams.extend(grams);
    }
    Ok(ctx.finish())
}

/// Exponential conditions imposed on a uniform grid of `Δ_i = δ·I` (rectangular
/// identity), `δ ∈ [−1, 1]`, per mode: a gridded oracle, not a certificate.
pub fn build_exp_robust_grid(sys: &SwitchedSystem, tbar: f64, points: usize) -> Result<Built> {
    check_tbar(tbar)?;
    if points < 2 {
        return invalid("uncertainty grid needs at least 2 points");
    }
    let channels = sys.channels()?;
    let mut ctx = Ctx::new(sys);
    for i in 0..sys.num_modes() {
        let c = &channels[i];
        for k in 0..points {
            let delta = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
            let dm = Matrix::identity(c.u.ncols(), c.v.nrows()) * delta;
            let a = sys.perturbed(i, &dm)?;
            ctx.lyapunov(i, &a);
            let e = expm(&a, tbar)?;
            for j in (0..sys.num_modes()).filter(|&j| j != i) {
                ctx.discrete(i, j, &e, format!("discrete ({}, {}) at δ = {delta}", i + 1, j + 1));
            }
        }
    }
    Ok(ctx.finish())
}
