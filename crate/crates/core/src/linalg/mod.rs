//! Dense real matrix kernel.
//!
//! Storage is `nalgebra::DMatrix<f64>`; the decompositions that the
//! certificate checks depend on (symmetric eigensolver, matrix exponential,
//! general eigenvalues) are implemented here so their accuracy contracts
//! are under our control.

mod eigen;
mod expm;
mod qr;
mod symeig;

pub use eigen::{eigenvalues, spectral_radius, Eigenvalue};
pub use expm::expm;
pub(crate) use qr::PivotedQr;
pub use symeig::{min_eig, sym_eig, SymEigen};

use crate::error::{invalid, mismatch, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Relative tolerance of the symmetry check applied by every
/// symmetric-matrix operation.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Builds a matrix from row slices.
pub fn from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Validates squareness, finiteness and symmetry; returns `(M + Mᵀ)/2`.
pub fn symmetrized(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return mismatch(format!("expected square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    if !all_finite(m) {
        return invalid("matrix has non-finite entries");
    }
    let n = m.nrows();
    let scale = 1.0 + max_abs(m);
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return invalid(format!("matrix is not symmetric (max asymmetry {asym:e})"));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// `M + Mᵀ`.
pub fn he(m: &Matrix) -> Matrix {
    m + m.transpose()
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn sym_norm(m: &Matrix) -> Result<f64> {
    let eig = sym_eig(m)?;
    Ok(eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

/// Induced 1-norm (max absolute column sum).
pub fn norm1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
