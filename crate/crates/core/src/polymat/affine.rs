//! Matrices and polynomials whose entries are affine in the decision
//! vector, plus the builder that collects them into an [`LmiProblem`].

use super::{Exponent, PolyMat};
use crate::conic::{LinearEquality, LmiBlock, LmiProblem, SymSparse};
use crate::linalg::Matrix;
use std::collections::BTreeMap;

/// `constant + Σ coef · y[var]`, terms sorted by variable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinForm {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinForm {
    pub fn zero() -> Self {
        LinForm::default()
    }

    pub fn constant(c: f64) -> Self {
        LinForm { terms: Vec::new(), constant: c }
    }

    pub fn var(k: usize) -> Self {
        LinForm { terms: vec![(k, 1.0)], constant: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &LinForm, s: f64) {
        if s == 0.0 || other.is_zero() {
            return;
        }
        self.constant += s * other.constant;
        if other.terms.is_empty() {
            return;
        }
        if self.terms.is_empty() {
            self.terms = other.terms.iter().map(|&(k, c)| (k, c * s)).collect();
            return;
        }
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let take_self = j >= other.terms.len() || (i < self.terms.len() && self.terms[i].0 < other.terms[j].0);
            let take_other = i >= self.terms.len() || (j < other.terms.len() && other.terms[j].0 < self.terms[i].0);
            if take_self {
                out.push(self.terms[i]);
                i += 1;
            } else if take_other {
                out.push((other.terms[j].0, other.terms[j].1 * s));
                j += 1;
            } else {
                let v = self.terms[i].1 + s * other.terms[j].1;
                if v != 0.0 {
                    out.push((self.terms[i].0, v));
                }
                i += 1;
                j += 1;
            }
        }
        self.terms = out;
    }

    pub fn scaled(&self, s: f64) -> LinForm {
        let mut out = LinForm::zero();
        out.add_scaled(self, s);
        out
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(k, c)| c * y[k]).sum::<f64>()
    }
}

/// Dense row-major matrix of [`LinForm`] entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<LinForm>,
}

impl LinMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LinMat { rows, cols, data: vec![LinForm::zero(); rows * cols] }
    }

    pub fn from_const(m: &Matrix) -> Self {
        let mut out = LinMat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = LinForm::constant(m[(i, j)]);
            }
        }
        out
    }

    /// `c · I` scaled by a single affine form.
    pub fn identity_times(n: usize, f: &LinForm) -> Self {
        let mut out = LinMat::zeros(n, n);
        for i in 0..n {
            out.data[i * n + i] = f.clone();
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> &LinForm {
        &self.data[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut LinForm {
        &mut self.data[i * self.cols + j]
    }

    pub fn add_scaled(&mut self, other: &LinMat, s: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "LinMat shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.add_scaled(b, s);
        }
    }

    pub fn scaled(&self, s: f64) -> LinMat {
        LinMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|f| f.scaled(s)).collect() }
    }

    pub fn transpose(&self) -> LinMat {
        let mut out = LinMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j).clone();
            }
        }
        out
    }

    /// `self · d` for a constant matrix `d`.
    pub fn mul_right(&self, d: &Matrix) -> LinMat {
        assert_eq!(self.cols, d.nrows(), "LinMat product shape mismatch");
        let mut out = LinMat::zeros(self.rows, d.ncols());
        for i in 0..self.rows {
            for l in 0..self.cols {
                let m = self.get(i, l);
                if m.is_zero() {
                    continue;
                }
                for j in 0..d.ncols() {
                    let v = d[(l, j)];
                    if v != 0.0 {
                        out.data[i * d.ncols() + j].add_scaled(m, v);
                    }
                }
            }
        }
        out
    }

    /// `d · self` for a constant matrix `d`.
    pub fn mul_left(&self, d: &Matrix) -> LinMat {
        self.transpose().mul_right(&d.transpose()).transpose()
    }

    /// `M + Mᵀ`.
    pub fn he(&self) -> LinMat {
        let mut out = self.clone();
        out.add_scaled(&self.transpose(), 1.0);
        out
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> LinMat {
        let mut out = LinMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = self.get(r0 + i, c0 + j).clone();
            }
        }
        out
    }

    pub fn add_block(&mut self, r0: usize, c0: usize, sub: &LinMat, s: f64) {
        for i in 0..sub.rows {
            for j in 0..sub.cols {
                self.get_mut(r0 + i, c0 + j).add_scaled(sub.get(i, j), s);
            }
        }
    }

    pub fn eval(&self, y: &[f64]) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(y))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(LinForm::is_zero)
    }

    /// Converts a symmetric expression into an LMI block (upper triangle read).
    pub fn to_block(&self, label: impl Into<String>) -> LmiBlock {
        assert_eq!(self.rows, self.cols, "LMI block must be square");
        let mut blk = LmiBlock::new(self.rows, label);
        let mut per_var: BTreeMap<usize, SymSparse> = BTreeMap::new();
        for j in 0..self.cols {
            for i in 0..=j {
                let f = self.get(i, j);
                if f.constant != 0.0 {
                    blk.constant.push(i, j, f.constant);
                }
                for &(k, c) in &f.terms {
                    per_var.entry(k).or_default().push(i, j, c);
                }
            }
        }
        blk.terms = per_var.into_iter().collect();
        blk
    }
}

/// Polynomial with [`LinMat`] coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffPoly {
    pub rows: usize,
    pub cols: usize,
    pub coeffs: BTreeMap<Exponent, LinMat>,
}

impl AffPoly {
    pub fn zero(rows: usize, cols: usize) -> Self {
        AffPoly { rows, cols, coeffs: BTreeMap::new() }
    }

    pub fn constant(m: LinMat) -> Self {
        let mut p = AffPoly::zero(m.rows, m.cols);
        p.coeffs.insert([0, 0], m);
        p
    }

    pub fn add_term(&mut self, e: Exponent, m: &LinMat, s: f64) {
        let (r, c) = (self.rows, self.cols);
        self.coeffs.entry(e).or_insert_with(|| LinMat::zeros(r, c)).add_scaled(m, s);
    }

    pub fn add_scaled(&mut self, other: &AffPoly, s: f64) {
        for (e, m) in &other.coeffs {
            self.add_term(*e, m, s);
        }
    }

    pub fn map(&self, f: impl Fn(&LinMat) -> LinMat) -> AffPoly {
        let coeffs: BTreeMap<Exponent, LinMat> = self.coeffs.iter().map(|(e, m)| (*e, f(m))).collect();
        let (rows, cols) = coeffs.values().next().map_or((self.rows, self.cols), |m| (m.rows, m.cols));
        AffPoly { rows, cols, coeffs }
    }

    pub fn derivative(&self, var: usize) -> AffPoly {
        let mut out = AffPoly::zero(self.rows, self.cols);
        for (e, m) in &self.coeffs {
            if e[var] > 0 {
                let mut ne = *e;
                ne[var] -= 1;
                out.add_term(ne, m, e[var] as f64);
            }
        }
        out
    }

    /// Evaluates the first variable at `v` for univariate polynomials,
    /// leaving a constant expression.
    pub fn eval_univariate(&self, v: f64) -> LinMat {
        let mut out = LinMat::zeros(self.rows, self.cols);
        for (e, m) in &self.coeffs {
            out.add_scaled(m, v.powi(e[0] as i32));
        }
        out
    }

    pub fn total_degree(&self) -> u32 {
        self.coeffs.iter().filter(|(_, m)| !m.is_zero()).map(|(e, _)| e[0] + e[1]).max().unwrap_or(0)
    }

    /// Fixes the decision vector.
    pub fn eval(&self, y: &[f64], vars: usize) -> PolyMat {
        let mut p = PolyMat::zero(self.rows, vars);
        for (e, m) in &self.coeffs {
            let v = m.eval(y);
            p.coeffs.insert(*e, (&v + v.transpose()) * 0.5);
        }
        p
    }
}

/// Accumulates variables, LMI blocks and equalities.
#[derive(Debug, Clone, Default)]
pub struct ProblemBuilder {
    pub num_vars: usize,
    pub names: Vec<String>,
    pub blocks: Vec<LmiBlock>,
    pub equalities: Vec<LinearEquality>,
}

impl ProblemBuilder {
    pub fn new() -> Self {
        ProblemBuilder::default()
    }

    pub fn new_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.num_vars += 1;
        self.num_vars - 1
    }

    /// Fresh symmetric matrix of variables; returns the matrix and its
    /// upper-triangle variable indices (column-major order).
    pub fn sym_matrix(&mut self, dim: usize, name: &str) -> (LinMat, Vec<usize>) {
        let mut m = LinMat::zeros(dim, dim);
        let mut vars = Vec::with_capacity(dim * (dim + 1) / 2);
        for j in 0..dim {
            for i in 0..=j {
                let k = self.new_var(format!("{name}[{i},{j}]"));
                vars.push(k);
                *m.get_mut(i, j) = LinForm::var(k);
                *m.get_mut(j, i) = LinForm::var(k);
            }
        }
        (m, vars)
    }

    pub fn add_block(&mut self, m: &LinMat, label: impl Into<String>) -> usize {
        self.blocks.push(m.to_block(label));
        self.blocks.len() - 1
    }

    /// Imposes `f = 0`.
    pub fn add_equality(&mut self, f: &LinForm) {
        if f.terms.is_empty() {
            debug_assert!(f.constant.abs() < 1e-12, "constant equality {}", f.constant);
            return;
        }
        self.equalities.push(LinearEquality { coeffs: f.terms.clone(), rhs: -f.constant });
    }

    /// Imposes every upper-triangle entry of a symmetric expression to vanish.
    pub fn add_sym_equalities(&mut self, m: &LinMat) {
        for j in 0..m.cols {
            for i in 0..=j {
                let f = m.get(i, j).clone();
                self.add_equality(&f);
            }
        }
    }

    pub fn finish(self) -> LmiProblem {
        let mut blocks = self.blocks;
        for b in &mut blocks {
            b.compress();
        }
        LmiProblem { num_vars: self.num_vars, blocks, equalities: self.equalities, variable_names: self.names }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;

    #[test]
    fn linform_merge() {
        let mut a = LinForm { terms: vec![(0, 1.0), (3, 2.0)], constant: 1.0 };
        let b = LinForm { terms: vec![(1, 1.0), (3, -1.0)], constant: 0.5 };
        a.add_scaled(&b, 2.0);
        assert_eq!(a.terms, vec![(0, 1.0), (1, 2.0)]);
        assert_eq!(a.constant, 2.0);
    }

    #[test]
    fn products_match_evaluation() {
        let mut b = ProblemBuilder::new();
        let (p, _) = b.sym_matrix(2, "P");
        let a = from_rows(&[&[0.0, 1.0], &[-2.0, -1.0]]);
        let lyap = p.mul_right(&a).he();
        let y = [1.0, 0.3, 2.0];
        let pv = p.eval(&y);
        let want = &pv * &a + a.transpose() * &pv;
        assert!((lyap.eval(&y) - want).abs().max() < 1e-14);
        let left = p.mul_left(&a.transpose());
        assert!((left.eval(&y) - a.transpose() * &pv).abs().max() < 1e-14);
    }

    #[test]
    fn block_conversion() {
        let mut b = ProblemBuilder::new();
        let (p, vars) = b.sym_matrix(2, "P");
        assert_eq!(vars.len(), 3);
        b.add_block(&p, "P ⪰ 0");
        let prob = b.finish();
        assert_eq!(prob.blocks[0].terms.len(), 3);
        let y = [1.0, 2.0, 3.0];
        assert_eq!(prob.blocks[0].eval(&y), from_rows(&[&[1.0, 2.0], &[2.0, 3.0]]));
    }
}
