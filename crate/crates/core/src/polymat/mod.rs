//! Symmetric-matrix-valued polynomials in one or two variables, affine
//! expressions over decision variables, and the compiler from polynomial
//! matrix positivity on an interval or box to Gram-matrix LMIs.

pub mod affine;
pub mod sos;

pub use affine::{AffPoly, LinForm, LinMat, ProblemBuilder};
pub use sos::{box_psd_constraint, interval_psd_constraint, BoxOptions, GramCertificate, Multiplier, SosProgram};

use crate::error::{invalid, mismatch, Result};
use crate::linalg::{symmetrized, Matrix};
use std::collections::BTreeMap;

/// Exponent of a monomial `v₁^e[0] · v₂^e[1]`; univariate polynomials use `e[1] = 0`.
pub type Exponent = [u32; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct PolyMat {
    pub dim: usize,
    pub vars: usize,
    pub coeffs: BTreeMap<Exponent, Matrix>,
}

impl PolyMat {
    pub fn zero(dim: usize, vars: usize) -> Self {
        PolyMat { dim, vars, coeffs: BTreeMap::new() }
    }

    pub fn constant(m: Matrix, vars: usize) -> Self {
        let mut p = PolyMat::zero(m.nrows(), vars);
        p.coeffs.insert([0, 0], m);
        p
    }

    /// Univariate polynomial from coefficients of `1, τ, τ², …`.
    pub fn univariate(coeffs: Vec<Matrix>) -> Result<Self> {
        let dim = coeffs.first().map_or(0, |c| c.nrows());
        let mut p = PolyMat::zero(dim, 1);
        for (k, c) in coeffs.into_iter().enumerate() {
            p.add_term([k as u32, 0], c)?;
        }
        Ok(p)
    }

    pub fn add_term(&mut self, e: Exponent, c: Matrix) -> Result<()> {
        if c.nrows() != self.dim || c.ncols() != self.dim {
            return mismatch(format!("coefficient is {}x{}, polynomial dim is {}", c.nrows(), c.ncols(), self.dim));
        }
        if self.vars == 1 && e[1] != 0 {
            return invalid("second exponent must be zero for a univariate polynomial");
        }
        let c = symmetrized(&c)?;
        *self.coeffs.entry(e).or_insert_with(|| Matrix::zeros(self.dim, self.dim)) += c;
        Ok(())
    }

    /// Highest exponent of variable `var` (0 or 1) among stored terms.
    pub fn degree(&self, var: usize) -> u32 {
        self.coeffs.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.coeffs.keys().map(|e| e[0] + e[1]).max().unwrap_or(0)
    }

    pub fn eval(&self, point: &[f64]) -> Result<Matrix> {
        if point.len() != self.vars {
            return mismatch(format!("polynomial has {} variables, point has {}", self.vars, point.len()));
        }
        let mut out = Matrix::zeros(self.dim, self.dim);
        for (e, c) in &self.coeffs {
            let mut w = point[0].powi(e[0] as i32);
            if self.vars == 2 {
                w *= point[1].powi(e[1] as i32);
            }
            out += c * w;
        }
        Ok((&out + out.transpose()) * 0.5)
    }

    pub fn derivative(&self, var: usize) -> PolyMat {
        let mut out = PolyMat::zero(self.dim, self.vars);
        for (e, c) in &self.coeffs {
            if e[var] == 0 {
                continue;
            }
            let mut ne = *e;
            ne[var] -= 1;
            *out.coeffs.entry(ne).or_insert_with(|| Matrix::zeros(self.dim, self.dim)) += c * e[var] as f64;
        }
        out
    }

    /// `P(α₀ + α₁ v)` in the first variable (second variable untouched).
    pub fn affine_substitute(&self, var: usize, offset: f64, scale: f64) -> PolyMat {
        let mut out = PolyMat::zero(self.dim, self.vars);
        for (e, c) in &self.coeffs {
            let k = e[var];
            // (offset + scale·v)^k = Σ_j C(k,j) offset^{k−j} scale^j v^j
            let mut binom = 1.0;
            for j in 0..=k {
                if j > 0 {
                    binom = binom * (k - j + 1) as f64 / j as f64;
                }
                let w = binom * offset.powi((k - j) as i32) * scale.powi(j as i32);
                if w == 0.0 {
                    continue;
                }
                let mut ne = *e;
                ne[var] = j;
                *out.coeffs.entry(ne).or_insert_with(|| Matrix::zeros(self.dim, self.dim)) += c * w;
            }
        }
        out
    }

    /// Rescales each variable: returns `Q(v) = P(s₀ v₀, s₁ v₁)`.
    pub fn scale_vars(&self, s: [f64; 2]) -> PolyMat {
        let mut out = self.clone();
        for (e, c) in out.coeffs.iter_mut() {
            *c *= s[0].powi(e[0] as i32) * s[1].powi(e[1] as i32);
        }
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().map(crate::linalg::max_abs).fold(0.0, f64::max)
    }
}
