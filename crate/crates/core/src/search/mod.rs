//! Bisection drivers over the certification predicates, the periodic
//! switching oracle and robustness sweeps.
//!
//! Every reported dwell-time is the smallest (or largest) probe that was
//! actually certified, so it is a one-sided bound, never an estimate.

use crate::conditions::{certify, ConditionOptions, DwellCertificate, DwellQuery, DwellRange, Method, QueryKind, SwitchedSystem};
use crate::conic::{SolveStatus, SolverOptions};
use crate::error::{invalid, DwellError, Result};
use crate::linalg::{expm, spectral_radius, Matrix};
use serde::{Deserialize, Serialize};

/// Largest dwell-time probed while bracketing.
pub const DWELL_CAP: f64 = 1e4;

pub const PERIODIC_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Absolute bisection tolerance on the dwell-time.
    pub tol: f64,
    pub cap: f64,
    pub conditions: ConditionOptions,
    pub solver: SolverOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { tol: 1e-3, cap: DWELL_CAP, conditions: ConditionOptions::default(), solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub value: f64,
    pub status: SolveStatus,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct BisectionReport {
    /// Certified end of the final bracket.
    pub value: f64,
    /// Uncertified end of the final bracket (`None` when the first probe certified).
    pub other: Option<f64>,
    pub certificate: DwellCertificate,
    pub probes: Vec<Probe>,
    /// Probes whose status contradicts a monotone predicate.
    pub non_monotone: Vec<f64>,
}

fn check_opts(opts: &SearchOptions) -> Result<()> {
    if !(opts.tol > 0.0) || !opts.tol.is_finite() {
        return invalid(format!("bisection tolerance must be positive, got {}", opts.tol));
    }
    if !(opts.cap > opts.tol) || !opts.cap.is_finite() {
        return invalid(format!("search cap {} must exceed the tolerance", opts.cap));
    }
    Ok(())
}

struct Predicate<'a, F: Fn(f64) -> Result<DwellQuery>> {
    sys: &'a SwitchedSystem,
    make: F,
    opts: &'a SearchOptions,
    probes: Vec<Probe>,
}

impl<F: Fn(f64) -> Result<DwellQuery>> Predicate<'_, F> {
    fn probe(&mut self, v: f64) -> Result<Option<DwellCertificate>> {
        let q = (self.make)(v)?;
        let out = match certify(self.sys, &q, &self.opts.conditions, &self.opts.solver) {
            Ok(o) => o,
            // Exponentials of growing modes overflow at large dwell-times.
            Err(DwellError::NumericRange(msg)) => {
                log::info!("probe {v}: {msg}, treated as not certified");
                self.probes.push(Probe { value: v, status: SolveStatus::NumericFailure, margin: f64::NAN });
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        log::debug!("probe {v:.6}: {:?} (margin {:.3e})", out.result.status, out.result.margin);
        if out.result.status == SolveStatus::NumericFailure {
            log::info!("probe {v}: numeric failure, treated as not certified ({})", out.result.message);
        }
        self.probes.push(Probe { value: v, status: out.result.status, margin: out.result.margin });
        Ok(out.certificate)
    }

    /// Probes contradicting `certified ⟺ (value ≥ threshold)` for increasing (or decreasing) predicates.
    fn non_monotone(&self, increasing: bool) -> Vec<f64> {
        let ok = |p: &Probe| p.status == SolveStatus::Certified;
        let mut bad = Vec::new();
        // Numeric failures are logged where they occur and are not evidence either way.
        for p in self.probes.iter().filter(|p| p.status == SolveStatus::NotCertified) {
            let contradicted = self.probes.iter().any(|q| ok(q) && if increasing { q.value < p.value } else { q.value > p.value });
            if contradicted {
                bad.push(p.value);
            }
        }
        bad
    }
}

/// Bisection for the smallest certified value of a predicate expected to be
/// monotone increasing in its argument, bracketed by doubling from `tol`.
fn bisect_min<F: Fn(f64) -> Result<DwellQuery>>(sys: &SwitchedSystem, make: F, opts: &SearchOptions, expect_monotone: bool) -> Result<BisectionReport> {
    check_opts(opts)?;
    let mut pred = Predicate { sys, make, opts, probes: Vec::new() };
    let mut hi = opts.tol;
    let mut lo = None;
    let mut cert = loop {
        if let Some(c) = pred.probe(hi)? {
            break c;
        }
        lo = Some(hi);
        if hi >= opts.cap {
            return Err(DwellError::Search(format!("no certified dwell-time up to {}", opts.cap)));
        }
        hi = (2.0 * hi).min(opts.cap);
    };
    if let Some(mut l) = lo {
        while hi - l > opts.tol {
            let mid = 0.5 * (l + hi);
            match pred.probe(mid)? {
                Some(c) => {
                    hi = mid;
                    cert = c;
                }
                None => l = mid,
            }
        }
        lo = Some(l);
    }
    let non_monotone = pred.non_monotone(true);
    report_non_monotone(&non_monotone, expect_monotone);
    Ok(BisectionReport { value: hi, other: lo, certificate: cert, probes: pred.probes, non_monotone })
}

fn report_non_monotone(bad: &[f64], expect_monotone: bool) {
    if bad.is_empty() {
        return;
    }
    if expect_monotone {
        log::warn!("condition expected to be monotone failed above a certified value at {bad:?}");
    } else {
        log::warn!("non-monotone probes at {bad:?}");
    }
}

/// Smallest certified minimum dwell-time, within `opts.tol`.
pub fn min_dwell_bisect(sys: &SwitchedSystem, method: Method, opts: &SearchOptions) -> Result<BisectionReport> {
    let exp = method == Method::Exponential;
    bisect_min(sys, |tbar| Ok(DwellQuery { kind: QueryKind::MinDwell { tbar }, method }), opts, exp)
}

/// Smallest robustly certified minimum dwell-time at amplitude `kappa`.
pub fn robust_min_dwell(sys: &SwitchedSystem, kappa: f64, method: Method, opts: &SearchOptions) -> Result<BisectionReport> {
    sys.channels()?;
    let exp = method == Method::Exponential;
    bisect_min(sys, |tbar| Ok(DwellQuery { kind: QueryKind::Robust { tbar, kappa }, method }), opts, exp)
}

/// Largest certified upper dwell-time of mode `target`; the other ranges and
/// the target's lower bound are taken from `ranges`.
pub fn max_upper_dwell(sys: &SwitchedSystem, target: usize, ranges: &[DwellRange], method: Method, opts: &SearchOptions) -> Result<BisectionReport> {
    check_opts(opts)?;
    if target >= ranges.len() {
        return invalid(format!("target mode {} out of range", target + 1));
    }
    let tmin = ranges[target].tmin;
    let make = |tmax: f64| {
        let mut r = ranges.to_vec();
        r[target].tmax = Some(tmax);
        Ok(DwellQuery { kind: QueryKind::ModeDependent { ranges: r }, method })
    };
    let mut pred = Predicate { sys, make, opts, probes: Vec::new() };
    // Very narrow boxes are badly conditioned; numeric failures there widen
    // the first probe instead of declaring the range empty.
    let mut width = opts.tol;
    let mut cert = loop {
        if let Some(c) = pred.probe(tmin + width)? {
            break c;
        }
        let status = pred.probes.last().map(|p| p.status);
        if status != Some(SolveStatus::NumericFailure) || tmin + 2.0 * width >= opts.cap {
            return Err(DwellError::Search(format!("empty range: nothing certified at T_max = {}", tmin + width)));
        }
        width *= 2.0;
    };
    let mut lo = width;
    let hi = loop {
        if tmin + width >= opts.cap {
            return Err(DwellError::Search(format!("every upper dwell-time up to {} is certified", opts.cap)));
        }
        width = (2.0 * width).min(opts.cap - tmin);
        match pred.probe(tmin + width)? {
            Some(c) => {
                lo = width;
                cert = c;
            }
            None => break width,
        }
    };
    let mut hi = hi;
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        match pred.probe(tmin + mid)? {
            Some(c) => {
                lo = mid;
                cert = c;
            }
            None => hi = mid,
        }
    }
    let non_monotone = pred.non_monotone(false);
    report_non_monotone(&non_monotone, false);
    Ok(BisectionReport { value: tmin + lo, other: Some(tmin + hi), certificate: cert, probes: pred.probes, non_monotone })
}

/// `ρ(∏ e^{A_k T_k})` over one cycle, applied in sequence order.
pub fn cycle_spectral_radius(sys: &SwitchedSystem, cycle: &[(usize, f64)]) -> Result<f64> {
    let mut m = Matrix::identity(sys.n, sys.n);
    for &(mode, t) in cycle {
        if mode >= sys.num_modes() {
            return invalid(format!("mode {} out of range", mode + 1));
        }
        m = expm(&sys.modes[mode], t)? * m;
    }
    spectral_radius(&m)
}

/// Critical value of the single free dwell (`None`) in a periodic cycle at
/// which `ρ` of the cycle map crosses 1, to within `tol`.
pub fn periodic_critical(sys: &SwitchedSystem, cycle: &[(usize, Option<f64>)], tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let free: Vec<usize> = (0..cycle.len()).filter(|&k| cycle[k].1.is_none()).collect();
    if free.len() != 1 {
        return invalid(format!("exactly one free dwell expected, found {}", free.len()));
    }
    for &(_, t) in cycle {
        if let Some(t) = t {
            if !(t >= 0.0) || !t.is_finite() {
                return invalid(format!("fixed dwell must be nonnegative, got {t}"));
            }
        }
    }
    let unstable = |t: f64| -> Result<bool> {
        let c: Vec<(usize, f64)> = cycle.iter().map(|&(m, d)| (m, d.unwrap_or(t))).collect();
        match cycle_spectral_radius(sys, &c) {
            Ok(r) => Ok(!(r < 1.0)),
            // Overflowing exponentials only arise from growing modes.
            Err(DwellError::NumericRange(_)) => Ok(true),
            Err(e) => Err(e),
        }
    };
    let start_unstable = unstable(tol)?;
    let mut t = tol;
    let (mut lo, mut hi) = loop {
        let next = (2.0 * t).min(DWELL_CAP);
        if unstable(next)? != start_unstable {
            break (t, next);
        }
        if next >= DWELL_CAP {
            return Err(DwellError::Search(format!(
                "no stability crossing up to {DWELL_CAP}: cycle is {} throughout",
                if start_unstable { "unstable" } else { "stable" }
            )));
        }
        t = next;
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if unstable(mid)? == start_unstable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    /// Certified bound per amplitude; `None` when nothing was certified below the cap.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub kappas: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Monotonicity violations, reported rather than enforced.
    pub flags: Vec<String>,
}

/// Relative slack allowed before a degree-monotonicity violation is flagged.
pub const DEGREE_SLACK: f64 = 0.05;

/// `T̄*(κ, method)` for every pair. `Method::Exponential` gives the gridded
/// baseline; rows are flagged when they decrease in `κ`, columns when a
/// higher degree exceeds a lower one by more than [`DEGREE_SLACK`].
pub fn robust_sweep(sys: &SwitchedSystem, kappas: &[f64], methods: &[Method], opts: &SearchOptions) -> Result<SweepTable> {
    sys.channels()?;
    if let Some(k) = kappas.iter().find(|k| !(**k >= 0.0) || !k.is_finite()) {
        return invalid(format!("amplitude must be nonnegative, got {k}"));
    }
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for &method in methods {
        let mut values = Vec::new();
        for &kappa in kappas {
            let v = match robust_min_dwell(sys, kappa, method, opts) {
                Ok(r) => Some(r.value),
                Err(DwellError::Search(msg)) => {
                    flags.push(format!("{method:?} at κ = {kappa}: {msg}"));
                    None
                }
                Err(e) => return Err(e),
            };
            log::info!("sweep {method:?} κ = {kappa}: {v:?}");
            values.push(v);
        }
        for k in 1..values.len() {
            if let (Some(a), Some(b)) = (values[k - 1], values[k]) {
                if b < a - opts.tol {
                    flags.push(format!("{method:?}: bound decreases from {a} at κ = {} to {b} at κ = {}", kappas[k - 1], kappas[k]));
                }
            }
        }
        rows.push(SweepRow { method, values });
    }
    let degree = |m: &Method| match m {
        Method::Affine { degree } => Some(*degree),
        Method::Exponential => None,
    };
    for a in &rows {
        for b in &rows {
            if let (Some(da), Some(db)) = (degree(&a.method), degree(&b.method)) {
                if da >= db {
                    continue;
                }
                for (k, (va, vb)) in a.values.iter().zip(&b.values).enumerate() {
                    if let (Some(va), Some(vb)) = (va, vb) {
                        if *vb > va * (1.0 + DEGREE_SLACK) {
                            flags.push(format!("κ = {}: degree {db} gives {vb}, above degree {da} ({va})", kappas[k]));
                        }
                    }
                }
            }
        }
    }
    for f in &flags {
        log::warn!("{f}");
    }
    Ok(SweepTable { kappas: kappas.to_vec(), rows, flags })
}

#[cfg(test)]
mod tests;
