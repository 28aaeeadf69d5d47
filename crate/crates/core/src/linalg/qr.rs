//! Householder QR with column pivoting, used for rank-revealing
//! eliminations.

use super::{Matrix, Vector};

pub(crate) struct PivotedQr {
    /// R in the upper triangle, Householder vectors below (unit leading entry implicit).
    qr: Matrix,
    beta: Vec<f64>,
    /// `perm[k]` = original column placed at position k.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedQr {
    /// Factors `a Π = Q R`; columns whose remaining norm drops below
    /// `rel_tol · (largest initial column norm)` are treated as dependent.
    pub fn new(a: &Matrix, rel_tol: f64) -> Self {
        let (m, n) = a.shape();
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<f64> = (0..n).map(|j| qr.column(j).norm_squared()).collect();
        let scale = norms.iter().cloned().fold(0.0, f64::max).sqrt();
        let steps = m.min(n);
        let mut beta = Vec::with_capacity(steps);
        let mut rank = 0;
        for k in 0..steps {
            let (mut best, mut best_norm) = (k, -1.0);
            for (j, &v) in norms.iter().enumerate().skip(k) {
                if v > best_norm {
                    best = j;
                    best_norm = v;
                }
            }
            // Recompute exactly to avoid downdating drift.
            let exact = qr.view((k, best), (m - k, 1)).norm();
            if scale == 0.0 || exact <= rel_tol * scale {
                break;
            }
            if best != k {
                qr.swap_columns(k, best);
                perm.swap(k, best);
                norms.swap(k, best);
            }
            let x0 = qr[(k, k)];
            let alpha = if x0 >= 0.0 { -exact } else { exact };
            let v0 = x0 - alpha;
            // v = (1, x[k+1..]/v0), beta = -v0/alpha
            for i in (k + 1)..m {
                qr[(i, k)] /= v0;
            }
            let b = -v0 / alpha;
            qr[(k, k)] = alpha;
            for j in (k + 1)..n {
                let mut dot = qr[(k, j)];
                for i in (k + 1)..m {
                    dot += qr[(i, k)] * qr[(i, j)];
                }
                let f = b * dot;
                qr[(k, j)] -= f;
                for i in (k + 1)..m {
                    let vi = qr[(i, k)];
                    qr[(i, j)] -= f * vi;
                }
                norms[j] -= qr[(k, j)] * qr[(k, j)];
                if norms[j] < 0.0 {
                    norms[j] = 0.0;
                }
            }
            beta.push(b);
            rank += 1;
        }
        PivotedQr { qr, beta, perm, rank }
    }

    /// In-place `x <- Qᵀ x` for each column of `x`.
    pub fn apply_qt(&self, x: &mut Matrix) {
        let m = self.qr.nrows();
        for k in 0..self.rank {
            for c in 0..x.ncols() {
                let mut dot = x[(k, c)];
                for i in (k + 1)..m {
                    dot += self.qr[(i, k)] * x[(i, c)];
                }
                let f = self.beta[k] * dot;
                x[(k, c)] -= f;
                for i in (k + 1)..m {
                    x[(i, c)] -= f * self.qr[(i, k)];
                }
            }
        }
    }

    /// In-place `x <- Q x`.
    pub fn apply_q(&self, x: &mut Matrix) {
        let m = self.qr.nrows();
        for k in (0..self.rank).rev() {
            for c in 0..x.ncols() {
                let mut dot = x[(k, c)];
                for i in (k + 1)..m {
                    dot += self.qr[(i, k)] * x[(i, c)];
                }
                let f = self.beta[k] * dot;
                x[(k, c)] -= f;
                for i in (k + 1)..m {
                    x[(i, c)] -= f * self.qr[(i, k)];
                }
            }
        }
    }

    /// Columns `rank..m` of Q: orthonormal basis of the complement of range(A).
    pub fn null_complement(&self) -> Matrix {
        let m = self.qr.nrows();
        let k = m - self.rank;
        let mut e = Matrix::zeros(m, k);
        for c in 0..k {
            e[(self.rank + c, c)] = 1.0;
        }
        self.apply_q(&mut e);
        e
    }

    /// Columns `0..rank` of Q.
    pub fn range_basis(&self) -> Matrix {
        let m = self.qr.nrows();
        let mut e = Matrix::zeros(m, self.rank);
        for c in 0..self.rank {
            e[(c, c)] = 1.0;
        }
        self.apply_q(&mut e);
        e
    }

    /// Leading `rank × rank` block of R.
    pub fn r11(&self) -> Matrix {
        self.qr.view((0, 0), (self.rank, self.rank)).upper_triangle()
    }

    /// `R11⁻¹ R12`, the coordinates of dependent columns in terms of pivots.
    pub fn dependent_coords(&self) -> Matrix {
        let n = self.qr.ncols();
        let r12 = self.qr.view((0, self.rank), (self.rank, n - self.rank)).into_owned();
        let r11 = self.r11();
        r11.solve_upper_triangular(&r12).unwrap_or_else(|| Matrix::zeros(self.rank, n - self.rank))
    }

    /// Basic least-squares solution of `A x ≈ b` (dependent columns set to zero).
    pub fn solve_basic(&self, b: &Vector) -> Vector {
        let n = self.qr.ncols();
        let mut rhs = Matrix::from_column_slice(b.len(), 1, b.as_slice());
        self.apply_qt(&mut rhs);
        let c = rhs.view((0, 0), (self.rank, 1)).into_owned();
        let z = self.r11().solve_upper_triangular(&c).unwrap_or_else(|| Matrix::zeros(self.rank, 1));
        let mut x = Vector::zeros(n);
        for k in 0..self.rank {
            x[self.perm[k]] = z[(k, 0)];
        }
        x
    }
}
