//! Block-diagonal LMI feasibility: problem container, margin-maximizing
//! interior-point solver, independent solution checker, equality
//! elimination and SDPA-sparse export.

mod ipm;
mod kernel;
mod sdpa;

pub use sdpa::{export_sdpa, parse_sdpa, SdpaProblem};

use crate::error::{invalid, mismatch, DwellError, Result};
use crate::linalg::{min_eig, sym_norm, Matrix, PivotedQr, Vector};

/// Sparse symmetric matrix stored by its upper triangle (`i ≤ j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    pub fn new() -> Self {
        SymSparse { entries: Vec::new() }
    }

    /// Adds `v` at `(i, j)` and `(j, i)`.
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push((a, b, v));
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut s = SymSparse::new();
        for j in 0..m.ncols() {
            for i in 0..=j {
                let v = m[(i, j)];
                if v != 0.0 {
                    s.entries.push((i, j, v));
                }
            }
        }
        s
    }

    pub fn add_to(&self, out: &mut Matrix, scale: f64) {
        for &(i, j, v) in &self.entries {
            out[(i, j)] += scale * v;
            if i != j {
                out[(j, i)] += scale * v;
            }
        }
    }

    pub fn to_dense(&self, size: usize) -> Matrix {
        let mut m = Matrix::zeros(size, size);
        self.add_to(&mut m, 1.0);
        m
    }

    /// Merges duplicate positions and drops zeros.
    pub fn compress(&mut self) {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(i, j, v) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => out.push((i, j, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        self.entries = out;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for SymSparse {
    fn default() -> Self {
        Self::new()
    }
}

/// One LMI block `F₀ + Σ_k y_k F_k ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: SymSparse,
    /// `(k, F_k)` for the variables that touch this block.
    pub terms: Vec<(usize, SymSparse)>,
    pub label: String,
}

impl LmiBlock {
    pub fn new(size: usize, label: impl Into<String>) -> Self {
        LmiBlock { size, constant: SymSparse::new(), terms: Vec::new(), label: label.into() }
    }

    pub fn eval(&self, y: &[f64]) -> Matrix {
        let mut m = self.constant.to_dense(self.size);
        for (k, f) in &self.terms {
            f.add_to(&mut m, y[*k]);
        }
        m
    }

    /// Merges repeated variables and drops empty terms.
    pub fn compress(&mut self) {
        self.constant.compress();
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, SymSparse)> = Vec::with_capacity(self.terms.len());
        for (k, f) in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == k => last.1.entries.extend(f.entries),
                _ => out.push((k, f)),
            }
        }
        for t in &mut out {
            t.1.compress();
        }
        out.retain(|t| !t.1.is_empty());
        self.terms = out;
    }
}

/// `Σ coeffs · y = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearEquality {
    pub fn residual(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().map(|(k, c)| c * y[*k]).sum::<f64>() - self.rhs
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub blocks: Vec<LmiBlock>,
    pub equalities: Vec<LinearEquality>,
    /// Optional labels, either empty or one per variable.
    pub variable_names: Vec<String>,
}

impl LmiProblem {
    pub fn validate(&self) -> Result<()> {
        if !self.variable_names.is_empty() && self.variable_names.len() != self.num_vars {
            return mismatch("variable_names must be empty or one per variable");
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            let check = |s: &SymSparse| -> Result<()> {
                for &(i, j, v) in &s.entries {
                    if i >= blk.size || j >= blk.size {
                        return mismatch(format!("block {b}: entry ({i},{j}) outside size {}", blk.size));
                    }
                    if !v.is_finite() {
                        return invalid(format!("block {b}: non-finite coefficient"));
                    }
                }
                Ok(())
            };
            check(&blk.constant)?;
            for (k, f) in &blk.terms {
                if *k >= self.num_vars {
                    return mismatch(format!("block {b}: variable {k} out of range"));
                }
                check(f)?;
            }
        }
        for (r, eq) in self.equalities.iter().enumerate() {
            if !eq.rhs.is_finite() {
                return invalid(format!("equality {r}: non-finite rhs"));
            }
            for &(k, c) in &eq.coeffs {
                if k >= self.num_vars || !c.is_finite() {
                    return invalid(format!("equality {r}: bad coefficient for variable {k}"));
                }
            }
        }
        Ok(())
    }

    pub fn var_name(&self, k: usize) -> String {
        self.variable_names.get(k).cloned().unwrap_or_else(|| format!("y[{k}]"))
    }

    fn equality_residual(&self, y: &[f64]) -> f64 {
        self.equalities.iter().map(|e| e.residual(y).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Certified,
    NotCertified,
    NumericFailure,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Absolute margin threshold; `None` selects `1e-7·(1 + max block norm)`.
    pub feas_tol: Option<f64>,
    pub eq_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Initial bound on the summed trace of all cone variables.
    pub trust_radius: f64,
    /// Upper cap on the maximized margin.
    pub margin_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { feas_tol: None, eq_tol: 1e-8, gap_tol: 1e-9, max_iter: 200, trust_radius: 1e3, margin_cap: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub equality_residual: f64,
    pub min_block_eig: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub status: SolveStatus,
    pub y: Vector,
    /// Minimum block eigenvalue recomputed at `y`.
    pub margin: f64,
    /// Margin value reported by the interior-point iterate.
    pub ipm_margin: f64,
    pub feas_tol: f64,
    pub iterations: usize,
    pub residuals: Residuals,
    pub message: String,
}

/// Independent recomputation of block eigenvalues and equality residuals.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub block_min_eigs: Vec<f64>,
    pub margin: f64,
    pub equality_residual: f64,
    pub max_block_norm: f64,
    /// `|margin − claimed| ≤ 1e-7`.
    pub consistent: bool,
}

pub const CHECK_AGREEMENT_TOL: f64 = 1e-7;

pub fn check_solution(p: &LmiProblem, y: &[f64], claimed_margin: f64) -> Result<CheckReport> {
    if y.len() != p.num_vars {
        return mismatch(format!("decision vector has length {}, problem has {} variables", y.len(), p.num_vars));
    }
    p.validate()?;
    let mut mins = Vec::with_capacity(p.blocks.len());
    let mut max_norm = 0.0_f64;
    for blk in &p.blocks {
        let m = blk.eval(y);
        mins.push(min_eig(&m)?);
        max_norm = max_norm.max(sym_norm(&m)?);
    }
    let margin = mins.iter().cloned().fold(f64::INFINITY, f64::min);
    let equality_residual = p.equality_residual(y);
    let consistent = (margin - claimed_margin).abs() <= CHECK_AGREEMENT_TOL || (margin.is_infinite() && claimed_margin.is_infinite());
    Ok(CheckReport { block_min_eigs: mins, margin, equality_residual, max_block_norm: max_norm, consistent })
}

/// Maximizes the margin `t` subject to every block `⪰ t·I` and the equalities.
pub fn solve_feasibility(p: &LmiProblem, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    kernel::solve(p, opts)
}

/// `y = y0 + N z`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub y0: Vector,
    pub basis: Matrix,
}

impl AffineMap {
    pub fn apply(&self, z: &[f64]) -> Vector {
        &self.y0 + &self.basis * Vector::from_column_slice(z)
    }
}

pub const ELIMINATION_RANK_TOL: f64 = 1e-10;

/// Removes the equalities by parametrizing their solution set.
pub fn eliminate_equalities(p: &LmiProblem) -> Result<(LmiProblem, AffineMap)> {
    p.validate()?;
    let m = p.num_vars;
    if p.equalities.is_empty() {
        return Ok((p.clone(), AffineMap { y0: Vector::zeros(m), basis: Matrix::identity(m, m) }));
    }
    let q = p.equalities.len();
    // Factor Eᵀ so that range(Eᵀ) and null(E) fall out of one decomposition.
    let mut et = Matrix::zeros(m, q);
    let mut f = Vector::zeros(q);
    for (r, eq) in p.equalities.iter().enumerate() {
        let norm = eq.coeffs.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt();
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        for &(k, c) in &eq.coeffs {
            et[(k, r)] += c * s;
        }
        f[r] = eq.rhs * s;
    }
    let qr = PivotedQr::new(&et, ELIMINATION_RANK_TOL);
    let rank = qr.rank;
    // Independent rows are the first `rank` pivots: solve R11ᵀ u = f_piv, y0 = Q1 u.
    let f_piv = Vector::from_iterator(rank, (0..rank).map(|k| f[qr.perm[k]]));
    let r11 = qr.r11();
    let u = r11.transpose().solve_lower_triangular(&f_piv).unwrap_or_else(|| Vector::zeros(rank));
    let y0 = qr.range_basis() * u;
    let res = (et.transpose() * &y0 - &f).amax();
    if res > 1e-9 * (1.0 + f.amax()) {
        return Err(DwellError::InfeasibleEqualities { residual: res });
    }
    let basis = qr.null_complement();
    let nz = basis.ncols();
    let mut reduced = LmiProblem { num_vars: nz, blocks: Vec::with_capacity(p.blocks.len()), equalities: Vec::new(), variable_names: Vec::new() };
    for blk in &p.blocks {
        let mut c = blk.constant.to_dense(blk.size);
        let mut dense_terms = vec![Matrix::zeros(blk.size, blk.size); nz];
        for (k, fk) in &blk.terms {
            let fd = fk.to_dense(blk.size);
            c += &fd * y0[*k];
            for (j, dt) in dense_terms.iter_mut().enumerate() {
                let w = basis[(*k, j)];
                if w != 0.0 {
                    *dt += &fd * w;
                }
            }
        }
        let mut nb = LmiBlock::new(blk.size, blk.label.clone());
        nb.constant = SymSparse::from_dense(&c);
        for (j, dt) in dense_terms.iter().enumerate() {
            let mut s = SymSparse::from_dense(dt);
            s.entries.retain(|e| e.2.abs() > 1e-15);
            if !s.is_empty() {
                nb.terms.push((j, s));
            }
        }
        reduced.blocks.push(nb);
    }
    Ok((reduced, AffineMap { y0, basis }))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scalar_block(c: f64, terms: &[(usize, f64)]) -> LmiBlock {
        let mut b = LmiBlock::new(1, "");
        if c != 0.0 {
            b.constant.push(0, 0, c);
        }
        for &(k, v) in terms {
            let mut s = SymSparse::new();
            s.push(0, 0, v);
            b.terms.push((k, s));
        }
        b
    }

    fn one_var(blocks: Vec<LmiBlock>) -> LmiProblem {
        LmiProblem { num_vars: 1, blocks, equalities: vec![], variable_names: vec![] }
    }

    #[test]
    fn trivial_certified() {
        let p = one_var(vec![scalar_block(-1.0, &[(0, 1.0)])]);
        let r = solve_feasibility(&p, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Certified);
        assert!(r.y[0] >= 1.0 + r.feas_tol);
        let c = check_solution(&p, r.y.as_slice(), r.margin).unwrap();
        assert!(c.consistent);
    }

    #[test]
    fn contradictory_not_certified() {
        let p = one_var(vec![scalar_block(-1.0, &[(0, 1.0)]), scalar_block(-1.0, &[(0, -1.0)])]);
        let r = solve_feasibility(&p, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::NotCertified);
        assert!((r.margin + 1.0).abs() < 1e-6);
    }

    #[test]
    fn check_hand_fed() {
        let p = one_var(vec![scalar_block(-1.0, &[(0, 1.0)])]);
        let c = check_solution(&p, &[3.0], 2.0).unwrap();
        assert!(c.consistent);
        assert!((c.margin - 2.0).abs() < 1e-15);
        assert!(check_solution(&p, &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn eliminate_example() {
        let p = LmiProblem {
            num_vars: 2,
            blocks: vec![scalar_block(0.0, &[(0, 1.0)])],
            equalities: vec![LinearEquality { coeffs: vec![(0, 1.0), (1, 1.0)], rhs: 0.0 }],
            variable_names: vec![],
        };
        let (red, map) = eliminate_equalities(&p).unwrap();
        assert_eq!(red.num_vars, 1);
        let d = map.basis.column(0);
        assert!((d[0] + d[1]).abs() < 1e-14);
        assert!((d[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn eliminate_empty_is_identity() {
        let p = one_var(vec![scalar_block(-1.0, &[(0, 1.0)])]);
        let (red, map) = eliminate_equalities(&p).unwrap();
        assert_eq!(red, p);
        assert_eq!(map.basis, Matrix::identity(1, 1));
    }

    #[test]
    fn eliminate_inconsistent() {
        let p = LmiProblem {
            num_vars: 1,
            blocks: vec![],
            equalities: vec![
                LinearEquality { coeffs: vec![(0, 1.0)], rhs: 0.0 },
                LinearEquality { coeffs: vec![(0, 2.0)], rhs: 1.0 },
            ],
            variable_names: vec![],
        };
        assert!(matches!(eliminate_equalities(&p), Err(DwellError::InfeasibleEqualities { .. })));
    }
}
