//! Matrix sum-of-squares certificates of positivity on an interval or a box.
//!
//! Univariate polynomials are handled in the variable `s ∈ [−1, 1]` with
//! `G(s) = S₀(s) + (1 − s²) S₁(s)`. Bivariate polynomials use the scaled
//! variables `x₁ = τ/T_max`, `x₂ = T/T_max` on `{0 ≤ x₁ ≤ x₂, a ≤ x₂ ≤ 1}`,
//! `a = T_min/T_max`, with `G = S₀ + g₁S₁ + g₂S₂ (+ g₁g₂S₃)`.
//! Gram matrices are indexed `basis ⊗ matrix`, position `a·dim + p`.

use super::affine::{AffPoly, LinMat, ProblemBuilder};
use super::{Exponent, PolyMat};
use crate::conic::LmiProblem;
use crate::error::{invalid, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplier {
    One,
    /// `1 − s²`
    Interval,
    /// `x₁(x₂ − x₁)`
    BoxTau,
    /// `(x₂ − a)(1 − x₂)`
    BoxPeriod,
    /// product of the two box multipliers
    BoxProduct,
}

#[derive(Debug, Clone)]
pub struct GramCertificate {
    pub basis: Vec<Exponent>,
    pub dim: usize,
    /// Upper-triangle variables of Q in column-major order.
    pub vars: Vec<usize>,
    pub multiplier: Multiplier,
    /// Index of the Gram block in the problem.
    pub block: usize,
}

impl GramCertificate {
    pub fn size(&self) -> usize {
        self.basis.len() * self.dim
    }

    pub fn gram(&self, y: &[f64]) -> Matrix {
        let n = self.size();
        let mut q = Matrix::zeros(n, n);
        let mut it = self.vars.iter();
        for j in 0..n {
            for i in 0..=j {
                let v = y[*it.next().unwrap()];
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        q
    }

    /// `S(v) = (b(v) ⊗ I)ᵀ Q (b(v) ⊗ I)`, multiplier excluded.
    pub fn sos_poly(&self, y: &[f64], vars: usize) -> PolyMat {
        let q = self.gram(y);
        let d = self.dim;
        let mut p = PolyMat::zero(d, vars);
        for (a, ea) in self.basis.iter().enumerate() {
            for (b, eb) in self.basis.iter().enumerate() {
                let e = [ea[0] + eb[0], ea[1] + eb[1]];
                let blk = q.view((a * d, b * d), (d, d)).into_owned();
                *p.coeffs.entry(e).or_insert_with(|| Matrix::zeros(d, d)) += blk;
            }
        }
        for c in p.coeffs.values_mut() {
            *c = (&*c + c.transpose()) * 0.5;
        }
        p
    }
}

/// Problem produced by the stand-alone compilers.
#[derive(Debug, Clone)]
pub struct SosProgram {
    pub problem: LmiProblem,
    pub grams: Vec<GramCertificate>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BoxOptions {
    /// Degree of S₀; multiplier Gram degrees are two (four for the product) lower.
    pub mult_degree: Option<u32>,
    pub product_term: bool,
}

fn univariate_basis(k: u32) -> Vec<Exponent> {
    (0..=k).map(|i| [i, 0]).collect()
}

fn bivariate_basis(k: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    for total in 0..=k {
        for a in (0..=total).rev() {
            out.push([a, total - a]);
        }
    }
    out
}

fn gram_term(
    b: &mut ProblemBuilder,
    basis: Vec<Exponent>,
    dim: usize,
    mult: &[(Exponent, f64)],
    tag: Multiplier,
    label: &str,
) -> (GramCertificate, AffPoly) {
    let n = basis.len() * dim;
    let (q, vars) = b.sym_matrix(n, label);
    let block = b.add_block(&q, label.to_string());
    let mut poly = AffPoly::zero(dim, dim);
    for (a, ea) in basis.iter().enumerate() {
        for (c, ec) in basis.iter().enumerate() {
            let sub = q.block(a * dim, c * dim, dim, dim);
            for (em, g) in mult {
                let e = [ea[0] + ec[0] + em[0], ea[1] + ec[1] + em[1]];
                poly.add_term(e, &sub, *g);
            }
        }
    }
    (GramCertificate { basis, dim, vars, multiplier: tag, block }, poly)
}

fn match_coefficients(b: &mut ProblemBuilder, g: &AffPoly, s: &AffPoly) {
    let mut keys: Vec<Exponent> = g.coeffs.keys().chain(s.coeffs.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let zero = LinMat::zeros(g.rows, g.cols);
    for e in keys {
        let mut diff = g.coeffs.get(&e).cloned().unwrap_or_else(|| zero.clone());
        if let Some(se) = s.coeffs.get(&e) {
            diff.add_scaled(se, -1.0);
        }
        b.add_sym_equalities(&diff);
    }
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

/// `G(s) ⪰ 0` for `s ∈ [−1, 1]`.
pub fn interval_psd(b: &mut ProblemBuilder, g: &AffPoly, mult_degree: Option<u32>, label: &str) -> Result<Vec<GramCertificate>> {
    if g.rows != g.cols {
        return invalid("interval constraint needs a square polynomial");
    }
    let dg = g.total_degree();
    let d0 = match mult_degree {
        Some(m) if m < dg => return invalid(format!("multiplier degree {m} below polynomial degree {dg}")),
        Some(m) => even_ceil(m),
        None => even_ceil(dg),
    };
    let dim = g.rows;
    let k0 = d0 / 2;
    let (c0, mut total) = gram_term(b, univariate_basis(k0), dim, &[([0, 0], 1.0)], Multiplier::One, &format!("{label} S0"));
    let mut out = vec![c0];
    if d0 >= 2 {
        let (c1, p1) = gram_term(
            b,
            univariate_basis(k0 - 1),
            dim,
            &[([0, 0], 1.0), ([2, 0], -1.0)],
            Multiplier::Interval,
            &format!("{label} S1"),
        );
        total.add_scaled(&p1, 1.0);
        out.push(c1);
    }
    match_coefficients(b, g, &total);
    Ok(out)
}

fn box_multipliers(a: f64) -> [Vec<(Exponent, f64)>; 3] {
    let g1 = vec![([1, 1], 1.0), ([2, 0], -1.0)];
    let g2 = vec![([0, 2], -1.0), ([0, 1], 1.0 + a), ([0, 0], -a)];
    let mut g12 = Vec::new();
    for (e1, c1) in &g1 {
        for (e2, c2) in &g2 {
            g12.push(([e1[0] + e2[0], e1[1] + e2[1]], c1 * c2));
        }
    }
    [g1, g2, g12]
}

/// `G(x₁, x₂) ⪰ 0` on `{0 ≤ x₁ ≤ x₂, a ≤ x₂ ≤ 1}`.
pub fn box_psd(b: &mut ProblemBuilder, g: &AffPoly, a: f64, opts: BoxOptions, label: &str) -> Result<Vec<GramCertificate>> {
    if g.rows != g.cols {
        return invalid("box constraint needs a square polynomial");
    }
    if !(0.0..1.0).contains(&a) {
        return invalid(format!("degenerate box: T_min/T_max = {a}"));
    }
    let dg = g.total_degree();
    let d0 = match opts.mult_degree {
        Some(m) if m < dg => return invalid(format!("multiplier degree {m} below polynomial degree {dg}")),
        Some(m) => even_ceil(m),
        None => even_ceil(dg),
    };
    let dim = g.rows;
    let k0 = d0 / 2;
    let [g1, g2, g12] = box_multipliers(a);
    let (c0, mut total) = gram_term(b, bivariate_basis(k0), dim, &[([0, 0], 1.0)], Multiplier::One, &format!("{label} S0"));
    let mut out = vec![c0];
    if d0 >= 2 {
        for (mult, tag, name) in [(&g1, Multiplier::BoxTau, "S1"), (&g2, Multiplier::BoxPeriod, "S2")] {
            let (c, p) = gram_term(b, bivariate_basis(k0 - 1), dim, mult, tag, &format!("{label} {name}"));
            total.add_scaled(&p, 1.0);
            out.push(c);
        }
    }
    if opts.product_term && d0 >= 4 {
        let (c, p) = gram_term(b, bivariate_basis(k0 - 2), dim, &g12, Multiplier::BoxProduct, &format!("{label} S3"));
        total.add_scaled(&p, 1.0);
        out.push(c);
    }
    match_coefficients(b, g, &total);
    Ok(out)
}

fn constant_affpoly(p: &PolyMat) -> AffPoly {
    let mut out = AffPoly::zero(p.dim, p.dim);
    for (e, c) in &p.coeffs {
        out.add_term(*e, &LinMat::from_const(c), 1.0);
    }
    out
}

/// Compiles `G(τ) ⪰ 0 on [0, T]` for a fixed univariate `G`.
pub fn interval_psd_constraint(g: &PolyMat, t: f64, mult_degree: Option<u32>) -> Result<SosProgram> {
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("interval length must be positive, got {t}"));
    }
    if g.vars != 1 {
        return invalid("interval constraint needs a univariate polynomial");
    }
    let gs = g.affine_substitute(0, t / 2.0, t / 2.0);
    let mut b = ProblemBuilder::new();
    let grams = interval_psd(&mut b, &constant_affpoly(&gs), mult_degree, "G")?;
    Ok(SosProgram { problem: b.finish(), grams })
}

/// Compiles `G(τ, T) ⪰ 0` for `0 ≤ τ ≤ T`, `T ∈ [T_min, T_max]`.
pub fn box_psd_constraint(g: &PolyMat, tmin: f64, tmax: f64, opts: BoxOptions) -> Result<SosProgram> {
    if !(tmin >= 0.0 && tmax > tmin && tmax.is_finite()) {
        return invalid(format!("degenerate box [{tmin}, {tmax}]"));
    }
    if g.vars != 2 {
        return invalid("box constraint needs a bivariate polynomial");
    }
    let gs = g.scale_vars([tmax, tmax]);
    let mut b = ProblemBuilder::new();
    let grams = box_psd(&mut b, &constant_affpoly(&gs), tmin / tmax, opts, "G")?;
    Ok(SosProgram { problem: b.finish(), grams })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{check_solution, solve_feasibility, SolveStatus, SolverOptions};

    fn scalar_poly(coeffs: &[(Exponent, f64)], vars: usize) -> PolyMat {
        let mut p = PolyMat::zero(1, vars);
        for (e, c) in coeffs {
            p.add_term(*e, Matrix::from_element(1, 1, *c)).unwrap();
        }
        p
    }

    #[test]
    fn identity_on_interval() {
        let g = PolyMat::constant(Matrix::identity(2, 2), 1);
        let prog = interval_psd_constraint(&g, 1.0, None).unwrap();
        assert_eq!(prog.grams.len(), 1);
        let r = solve_feasibility(&prog.problem, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        let q = prog.grams[0].gram(r.y.as_slice());
        assert!((q - Matrix::identity(2, 2)).abs().max() < 1e-7);
    }

    #[test]
    fn sign_change_not_representable() {
        let t = 2.0;
        let mut g = PolyMat::zero(2, 1);
        g.add_term([0, 0], Matrix::identity(2, 2) * (-t / 2.0)).unwrap();
        g.add_term([1, 0], Matrix::identity(2, 2)).unwrap();
        let prog = interval_psd_constraint(&g, t, None).unwrap();
        let r = solve_feasibility(&prog.problem, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::NotCertified);
    }

    #[test]
    fn interval_weight_exact() {
        // τ(1−τ) on [0,1] equals (1 − s²)/4: S₀ = 0, S₁ = 1/4 in the s variable.
        let g = scalar_poly(&[([1, 0], 1.0), ([2, 0], -1.0)], 1);
        let prog = interval_psd_constraint(&g, 1.0, None).unwrap();
        let mut y = vec![0.0; prog.problem.num_vars];
        y[prog.grams[1].vars[0]] = 0.25;
        let rep = check_solution(&prog.problem, &y, 0.0).unwrap();
        assert!(rep.equality_residual < 1e-15);
        assert!(rep.consistent);
        let r = solve_feasibility(&prog.problem, &SolverOptions::default()).unwrap();
        assert!(r.margin.abs() < 1e-6, "boundary instance has zero optimal margin, got {}", r.margin);
    }

    #[test]
    fn box_examples() {
        let g = PolyMat::constant(Matrix::identity(2, 2), 2);
        let r = solve_feasibility(&box_psd_constraint(&g, 0.5, 2.0, BoxOptions::default()).unwrap().problem, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        // g₂ = (T − 0.5)(2 − T) exactly representable by the S₂ term.
        let g2 = scalar_poly(&[([0, 2], -1.0), ([0, 1], 2.5), ([0, 0], -1.0)], 2);
        let prog = box_psd_constraint(&g2, 0.5, 2.0, BoxOptions::default()).unwrap();
        let mut y = vec![0.0; prog.problem.num_vars];
        let s2 = prog.grams.iter().find(|c| c.multiplier == Multiplier::BoxPeriod).unwrap();
        y[s2.vars[0]] = 4.0;
        assert!(check_solution(&prog.problem, &y, 0.0).unwrap().equality_residual < 1e-14);
        assert!(box_psd_constraint(&g, 2.0, 1.0, BoxOptions::default()).is_err());
    }

    #[test]
    fn degree_override_checked() {
        let g = scalar_poly(&[([3, 0], 1.0)], 1);
        assert!(interval_psd_constraint(&g, 1.0, Some(2)).is_err());
        let prog = interval_psd_constraint(&g, 1.0, Some(6)).unwrap();
        assert_eq!(prog.grams[0].basis.len(), 4);
        assert!(interval_psd_constraint(&g, 0.0, None).is_err());
    }

    #[test]
    fn degree_monotone_on_positive_instance() {
        // 1 + τ − τ²/2 + τ³/20 on [0, 2] is positive.
        let g = scalar_poly(&[([0, 0], 1.0), ([1, 0], 1.0), ([2, 0], -0.5), ([3, 0], 0.05)], 1);
        for d in [4, 6] {
            let prog = interval_psd_constraint(&g, 2.0, Some(d)).unwrap();
            let r = solve_feasibility(&prog.problem, &SolverOptions::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Certified, "degree {d}");
        }
    }
}
