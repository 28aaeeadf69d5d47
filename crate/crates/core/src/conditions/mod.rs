//! Dwell-time conditions as LMI problems, and certificate extraction.
//!
//! Every builder returns a [`Built`] problem together with the [`Layout`]
//! telling where `P_i`, `ε`, `Z_ij`, `μ` and the Gram matrices sit in the
//! decision vector. Feasibility problems are homogeneous, so each builder
//! imposes `Σ tr P_i = N·n`; extraction rescales the solution so that
//! `min λ(P_i) = 1`.
//!
//! Polynomials are parametrized in scaled variables (`s = 2τ/T̄ − 1` for a
//! single interval, `x = (τ, T)/T_max` for a box) and converted back to raw
//! `τ` (or `(τ, T)`) on extraction.

mod build;

pub use build::{
    boundary_constraint, build_affine_min_dwell, build_affine_mode_dependent, build_exp_min_dwell,
    build_exp_mode_dependent, build_exp_robust_grid, build_robust_min_dwell, y_matrices, EPS_FLOOR,
};

use crate::conic::{solve_feasibility, SolveStatus, SolverOptions, SolverResult};
use crate::error::{invalid, mismatch, DwellError, Result};
use crate::linalg::{all_finite, min_eig, Matrix};
use crate::polymat::{Exponent, GramCertificate, PolyMat};
use serde::{Deserialize, Serialize};

/// Norm-bounded uncertainty channel `A = F + κ U Δ V`, `‖Δ‖₂ ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyChannel {
    pub u: Matrix,
    pub v: Matrix,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    pub n: usize,
    /// Nominal matrices (the `F_i` when uncertainty is present).
    pub modes: Vec<Matrix>,
    pub uncertainty: Option<Vec<UncertaintyChannel>>,
}

impl SwitchedSystem {
    pub fn new(modes: Vec<Matrix>) -> Result<Self> {
        let n = match modes.first() {
            Some(a) => a.nrows(),
            None => return invalid("a switched system needs at least one mode"),
        };
        if n == 0 {
            return invalid("state dimension must be positive");
        }
        for (k, a) in modes.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return mismatch(format!("mode {} is {}x{}, expected {n}x{n}", k + 1, a.nrows(), a.ncols()));
            }
            if !all_finite(a) {
                return invalid(format!("mode {} has non-finite entries", k + 1));
            }
        }
        Ok(SwitchedSystem { n, modes, uncertainty: None })
    }

    pub fn with_uncertainty(mut self, channels: Vec<UncertaintyChannel>) -> Result<Self> {
        if channels.len() != self.modes.len() {
            return mismatch(format!("{} uncertainty channels for {} modes", channels.len(), self.modes.len()));
        }
        for (k, c) in channels.iter().enumerate() {
            if c.u.nrows() != self.n || c.v.ncols() != self.n {
                return mismatch(format!(
                    "mode {}: U is {}x{}, V is {}x{}, state dimension {}",
                    k + 1,
                    c.u.nrows(),
                    c.u.ncols(),
                    c.v.nrows(),
                    c.v.ncols(),
                    self.n
                ));
            }
            if !(c.kappa >= 0.0) || !c.kappa.is_finite() {
                return invalid(format!("mode {}: amplitude must be finite and nonnegative", k + 1));
            }
            if !all_finite(&c.u) || !all_finite(&c.v) {
                return invalid(format!("mode {}: non-finite uncertainty data", k + 1));
            }
        }
        self.uncertainty = Some(channels);
        Ok(self)
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// Copy with every channel amplitude set to `kappa`.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        let ch = self.channels()?;
        let mut out = self.clone();
        out.uncertainty = Some(ch.iter().map(|c| UncertaintyChannel { kappa, ..c.clone() }).collect());
        Ok(out)
    }

    pub fn channels(&self) -> Result<&[UncertaintyChannel]> {
        self.uncertainty.as_deref().ok_or_else(|| DwellError::InvalidInput("system has no uncertainty channel".into()))
    }

    /// `F_i + κ U_i Δ V_i`.
    pub fn perturbed(&self, i: usize, delta: &Matrix) -> Result<Matrix> {
        let c = &self.channels()?[i];
        if delta.nrows() != c.u.ncols() || delta.ncols() != c.v.nrows() {
            return mismatch("uncertainty block has the wrong shape");
        }
        Ok(&self.modes[i] + &c.u * delta * &c.v * c.kappa)
    }

    pub(crate) fn require_certain(&self) -> Result<()> {
        if self.uncertainty.is_some() {
            return invalid("this condition applies to systems without an uncertainty channel");
        }
        Ok(())
    }

    /// Ordered pairs `(i, j)`, `i ≠ j`: mode `i` entered from mode `j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.num_modes();
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect()
    }
}

/// Dwell range `[tmin, tmax]`; `tmax = None` stands for `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellRange {
    pub tmin: f64,
    pub tmax: Option<f64>,
}

impl DwellRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.tmin > 0.0) || !self.tmin.is_finite() {
            return invalid(format!("minimum dwell-time must be positive, got {}", self.tmin));
        }
        if let Some(t) = self.tmax {
            if !(t > self.tmin) || !t.is_finite() {
                return invalid(format!("degenerate dwell range [{}, {t}]", self.tmin));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exponential,
    Affine { degree: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    MinDwell { tbar: f64 },
    ModeDependent { ranges: Vec<DwellRange> },
    Robust { tbar: f64, kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellQuery {
    pub kind: QueryKind,
    pub method: Method,
}

/// Knobs shared by the affine builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    /// Degree of the SOS part `S₀`; defaults to the polynomial degree rounded up to even.
    pub mult_degree: Option<u32>,
    /// Degree of `μ_ij(τ)`; defaults to the `Z` degree rounded up to even.
    pub mu_degree: Option<u32>,
    /// Adds the `g₁g₂` product multiplier on boxes.
    pub product_term: bool,
    /// Grid points per bounded range for the gridded exponential oracle.
    pub grid_density: usize,
    /// Grid points per mode for the gridded exponential robust baseline.
    pub delta_grid: usize,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions { mult_degree: None, mu_degree: None, product_term: false, grid_density: 50, delta_grid: 21 }
    }
}

/// Parametrization domain of a polynomial certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `τ ∈ [0, T̄]`, stored in `s = 2τ/T̄ − 1`.
    Interval { tbar: f64 },
    /// `0 ≤ τ ≤ T`, `T ∈ [tmin, tmax]`, stored in `(τ, T)/tmax`.
    Box { tmin: f64, tmax: f64 },
}

impl Domain {
    pub fn vars(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Box { .. } => 2,
        }
    }

    /// Maps a polynomial in the scaled variables back to raw time.
    pub fn to_raw(&self, p: &PolyMat) -> PolyMat {
        match *self {
            Domain::Interval { tbar } => p.affine_substitute(0, -1.0, 2.0 / tbar),
            Domain::Box { tmax, .. } => p.scale_vars([1.0 / tmax, 1.0 / tmax]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZSlot {
    pub i: usize,
    pub j: usize,
    pub domain: Domain,
    /// Upper-triangle variables (column-major) of each scaled coefficient.
    pub coeffs: Vec<(Exponent, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct MuSlot {
    pub i: usize,
    pub j: usize,
    pub domain: Domain,
    pub coeffs: Vec<(Exponent, usize)>,
}

/// Positions of the certificate components in the decision vector.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    pub n: usize,
    pub p: Vec<Vec<usize>>,
    pub eps: Option<usize>,
    pub z: Vec<ZSlot>,
    pub mu_const: Vec<usize>,
    pub mu_poly: Vec<MuSlot>,
    pub grams: Vec<GramCertificate>,
}

/// A built LMI problem with its variable layout.
#[derive(Debug, Clone)]
pub struct Built {
    pub problem: crate::conic::LmiProblem,
    pub layout: Layout,
}

/// Polynomial attached to an ordered mode pair, in raw time variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPoly {
    pub i: usize,
    pub j: usize,
    pub domain: Domain,
    pub poly: PolyMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwellCertificate {
    pub query: DwellQuery,
    pub p: Vec<Matrix>,
    pub eps: Option<f64>,
    pub z: Vec<PairPoly>,
    pub mu_const: Vec<f64>,
    pub mu_poly: Vec<PairPoly>,
    /// Solver margin after normalization.
    pub margin: f64,
}

impl DwellCertificate {
    pub fn z_for(&self, i: usize, j: usize) -> Option<&PairPoly> {
        self.z.iter().find(|z| z.i == i && z.j == j)
    }

    pub fn mu_for(&self, i: usize, j: usize) -> Option<&PairPoly> {
        self.mu_poly.iter().find(|z| z.i == i && z.j == j)
    }
}

fn sym_from_vars(y: &[f64], vars: &[usize], dim: usize) -> Matrix {
    let mut m = Matrix::zeros(dim, dim);
    let mut it = vars.iter();
    for j in 0..dim {
        for i in 0..=j {
            let v = y[*it.next().expect("layout/dimension mismatch")];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Reassembles a normalized certificate from a certified solve.
pub fn extract_certificate(query: &DwellQuery, result: &SolverResult, layout: &Layout) -> Result<DwellCertificate> {
    if result.status != SolveStatus::Certified {
        return Err(DwellError::NotCertified);
    }
    let y = result.y.as_slice();
    let n = layout.n;
    let raw_p: Vec<Matrix> = layout.p.iter().map(|v| sym_from_vars(y, v, n)).collect();
    let mut lo = f64::INFINITY;
    for p in &raw_p {
        lo = lo.min(min_eig(p)?);
    }
    if !(lo > 0.0) {
        return Err(DwellError::NumericRange(format!("certified P has min eigenvalue {lo:e}")));
    }
    let c = 1.0 / lo;
    let p = raw_p.into_iter().map(|m| m * c).collect();
    let eps = layout.eps.map(|k| y[k] * c);
    let mut z = Vec::with_capacity(layout.z.len());
    for slot in &layout.z {
        let mut poly = PolyMat::zero(3 * n, slot.domain.vars());
        for (e, vars) in &slot.coeffs {
            poly.add_term(*e, sym_from_vars(y, vars, 3 * n) * c)?;
        }
        z.push(PairPoly { i: slot.i, j: slot.j, domain: slot.domain, poly: slot.domain.to_raw(&poly) });
    }
    let mu_const = layout.mu_const.iter().map(|&k| y[k] * c).collect();
    let mut mu_poly = Vec::with_capacity(layout.mu_poly.len());
    for slot in &layout.mu_poly {
        let mut poly = PolyMat::zero(1, slot.domain.vars());
        for (e, k) in &slot.coeffs {
            poly.add_term(*e, Matrix::from_element(1, 1, y[*k] * c))?;
        }
        mu_poly.push(PairPoly { i: slot.i, j: slot.j, domain: slot.domain, poly: slot.domain.to_raw(&poly) });
    }
    Ok(DwellCertificate { query: query.clone(), p, eps, z, mu_const, mu_poly, margin: result.margin * c })
}

/// Builds the problem matching `query`.
pub fn build(sys: &SwitchedSystem, query: &DwellQuery, opts: &ConditionOptions) -> Result<Built> {
    match (&query.kind, query.method) {
        (QueryKind::MinDwell { tbar }, Method::Exponential) => build_exp_min_dwell(sys, *tbar, true),
        (QueryKind::MinDwell { tbar }, Method::Affine { degree }) => build_affine_min_dwell(sys, *tbar, degree, opts),
        (QueryKind::ModeDependent { ranges }, Method::Exponential) => build_exp_mode_dependent(sys, ranges, opts.grid_density),
        (QueryKind::ModeDependent { ranges }, Method::Affine { degree }) => build_affine_mode_dependent(sys, ranges, degree, opts),
        (QueryKind::Robust { tbar, kappa }, Method::Exponential) => {
            build_exp_robust_grid(&sys.with_kappa(*kappa)?, *tbar, opts.delta_grid)
        }
        (QueryKind::Robust { tbar, kappa }, Method::Affine { degree }) => {
            build_robust_min_dwell(&sys.with_kappa(*kappa)?, *tbar, degree, opts)
        }
    }
}

/// Solve outcome of a single query.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: SolverResult,
    pub certificate: Option<DwellCertificate>,
}

/// Builds, solves and, when certified, extracts.
pub fn certify(sys: &SwitchedSystem, query: &DwellQuery, opts: &ConditionOptions, solver: &SolverOptions) -> Result<Outcome> {
    let built = build(sys, query, opts)?;
    let result = solve_feasibility(&built.problem, solver)?;
    let certificate = if result.status == SolveStatus::Certified {
        Some(extract_certificate(query, &result, &built.layout)?)
    } else {
        None
    };
    Ok(Outcome { result, certificate })
}

#[cfg(test)]
mod tests;
