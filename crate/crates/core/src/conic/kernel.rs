//! Reduction of the margin problem to a standard-form SDP.
//!
//! Every block becomes a cone variable `X_b = F_b(y) − t·I`. Blocks whose
//! entries are each owned by a private variable (Gram matrices) are used
//! as cone variables directly; the remaining free variables `(y, t)` are
//! eliminated by projecting the constraint rows onto the left null space of
//! their coefficient matrix. Two extra scalar cones cap the margin
//! (`t ≤ cap`) and bound the summed trace of all cone variables.

use super::ipm::{self, IpmSettings, StdSdp};
use super::{check_solution, LmiProblem, Residuals, SolveStatus, SolverOptions, SolverResult};
use crate::error::{DwellError, Result};
use crate::linalg::{Matrix, PivotedQr, Vector};
use nalgebra::Cholesky;
use std::f64::consts::SQRT_2;

const W_RANK_TOL: f64 = 1e-11;
const ROW_RANK_TOL: f64 = 1e-12;
const DROP_TOL: f64 = 1e-14;
const ZERO_ROW_TOL: f64 = 1e-10;
const DEPENDENT_ROW_TOL: f64 = 1e-6;
const TRUST_GROWTH: f64 = 10.0;
const TRUST_ATTEMPTS: usize = 4;

#[derive(Clone, Copy)]
struct Owner {
    block: usize,
    i: usize,
    j: usize,
    coef: f64,
}

struct Row {
    x: Vec<(usize, f64)>,
    w: Vec<(usize, f64)>,
    rhs: f64,
}

struct Layout {
    /// Cone block sizes: problem blocks, then cap, then trace slack.
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    nx: usize,
    owner: Vec<Option<Owner>>,
    wcol: Vec<Option<usize>>,
    nw: usize,
    t_col: usize,
    cap_block: usize,
    trace_block: usize,
}

impl Layout {
    fn idx(&self, b: usize, i: usize, j: usize) -> usize {
        let (p, q) = if i <= j { (i, j) } else { (j, i) };
        self.offsets[b] + q * (q + 1) / 2 + p
    }

    /// Coefficient turning `svec` entry into the matrix entry `X_ij`.
    fn entry_scale(i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            1.0 / SQRT_2
        }
    }
}

fn layout(p: &LmiProblem) -> Layout {
    let m = p.num_vars;
    let mut occurrences: Vec<Vec<Owner>> = vec![Vec::new(); m];
    for (b, blk) in p.blocks.iter().enumerate() {
        for (k, f) in &blk.terms {
            for &(i, j, v) in &f.entries {
                if v != 0.0 {
                    occurrences[*k].push(Owner { block: b, i, j, coef: v });
                }
            }
        }
    }
    let mut owner: Vec<Option<Owner>> = vec![None; m];
    for blk_idx in 0..p.blocks.len() {
        let blk = &p.blocks[blk_idx];
        let mut seen = std::collections::HashSet::new();
        let mut ok = !blk.terms.is_empty();
        for (k, _) in &blk.terms {
            let occ = &occurrences[*k];
            if occ.len() != 1 || occ[0].block != blk_idx || !seen.insert((occ[0].i, occ[0].j)) {
                ok = false;
                break;
            }
        }
        if ok {
            for (k, _) in &blk.terms {
                owner[*k] = Some(occurrences[*k][0]);
            }
        }
    }
    let mut wcol = vec![None; m];
    let mut nw = 0;
    for k in 0..m {
        if owner[k].is_none() {
            wcol[k] = Some(nw);
            nw += 1;
        }
    }
    let t_col = nw;
    nw += 1;
    let mut sizes: Vec<usize> = p.blocks.iter().map(|b| b.size).collect();
    let cap_block = sizes.len();
    sizes.push(1);
    let trace_block = sizes.len();
    sizes.push(1);
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut nx = 0;
    for &s in &sizes {
        offsets.push(nx);
        nx += s * (s + 1) / 2;
    }
    Layout { sizes, offsets, nx, owner, wcol, nw, t_col, cap_block, trace_block }
}

fn build_rows(p: &LmiProblem, lay: &Layout, cap: f64, trust: f64) -> Vec<Row> {
    let mut rows = Vec::new();
    for eq in &p.equalities {
        let mut r = Row { x: Vec::new(), w: Vec::new(), rhs: eq.rhs };
        for &(k, c) in &eq.coeffs {
            if let Some(o) = lay.owner[k] {
                let f0 = entry_of(&p.blocks[o.block].constant.entries, o.i, o.j);
                r.x.push((lay.idx(o.block, o.i, o.j), c / o.coef * Layout::entry_scale(o.i, o.j)));
                if o.i == o.j {
                    r.w.push((lay.t_col, c / o.coef));
                }
                r.rhs += c * f0 / o.coef;
            } else {
                r.w.push((lay.wcol[k].unwrap(), c));
            }
        }
        rows.push(r);
    }
    for (b, blk) in p.blocks.iter().enumerate() {
        let variable_block = blk.terms.iter().all(|(k, _)| lay.owner[*k].is_some()) && !blk.terms.is_empty();
        let mut owned = std::collections::HashSet::new();
        if variable_block {
            for (k, _) in &blk.terms {
                let o = lay.owner[*k].unwrap();
                owned.insert((o.i.min(o.j), o.i.max(o.j)));
            }
        }
        for j in 0..blk.size {
            for i in 0..=j {
                if variable_block && owned.contains(&(i, j)) {
                    continue;
                }
                let mut r = Row {
                    x: vec![(lay.idx(b, i, j), Layout::entry_scale(i, j))],
                    w: Vec::new(),
                    rhs: entry_of(&blk.constant.entries, i, j),
                };
                if i == j {
                    r.w.push((lay.t_col, 1.0));
                }
                if !variable_block {
                    for (k, f) in &blk.terms {
                        let v = entry_of(&f.entries, i, j);
                        if v != 0.0 {
                            r.w.push((lay.wcol[*k].unwrap(), -v));
                        }
                    }
                }
                rows.push(r);
            }
        }
    }
    rows.push(Row { x: vec![(lay.idx(lay.cap_block, 0, 0), 1.0)], w: vec![(lay.t_col, 1.0)], rhs: cap });
    let mut tr = Row { x: Vec::new(), w: Vec::new(), rhs: trust };
    for (b, &s) in lay.sizes.iter().enumerate() {
        for i in 0..s {
            tr.x.push((lay.idx(b, i, i), 1.0));
        }
    }
    rows.push(tr);
    for r in &mut rows {
        merge(&mut r.x);
        merge(&mut r.w);
    }
    rows
}

fn entry_of(entries: &[(usize, usize, f64)], i: usize, j: usize) -> f64 {
    let (p, q) = if i <= j { (i, j) } else { (j, i) };
    entries.iter().filter(|e| e.0 == p && e.1 == q).map(|e| e.2).sum()
}

fn merge(v: &mut Vec<(usize, f64)>) {
    v.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for &(k, c) in v.iter() {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += c,
            _ => out.push((k, c)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    *v = out;
}

struct Reduction {
    sdp: StdSdp,
    /// Row-scaled constraint data needed to recover `w`.
    w_rows: Vec<usize>,
    rows: Vec<Row>,
    qr: PivotedQr,
    colscale: Vec<f64>,
}

fn reduce(lay: &Layout, mut rows: Vec<Row>) -> Result<Reduction> {
    for r in &mut rows {
        let n = (r.x.iter().map(|e| e.1 * e.1).sum::<f64>() + r.w.iter().map(|e| e.1 * e.1).sum::<f64>()).sqrt();
        if n > 0.0 {
            r.x.iter_mut().for_each(|e| e.1 /= n);
            r.w.iter_mut().for_each(|e| e.1 /= n);
            r.rhs /= n;
        }
    }
    let w_rows: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].w.is_empty()).collect();
    let pure_rows: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].w.is_empty()).collect();
    let rw = w_rows.len();
    let mut wmat = Matrix::zeros(rw, lay.nw);
    for (ri, &i) in w_rows.iter().enumerate() {
        for &(k, c) in &rows[i].w {
            wmat[(ri, k)] = c;
        }
    }
    let mut colscale = vec![1.0; lay.nw];
    for (k, cs) in colscale.iter_mut().enumerate() {
        let n = wmat.column(k).norm();
        if n > 0.0 {
            *cs = 1.0 / n;
            wmat.column_mut(k).scale_mut(1.0 / n);
        }
    }
    let qr = PivotedQr::new(&wmat, W_RANK_TOL);
    check_margin_identifiable(&qr, lay.t_col)?;
    let q2 = qr.null_complement();
    let k2 = q2.ncols();
    let mt = k2 + pure_rows.len();
    let mut at = Matrix::zeros(mt, lay.nx);
    let mut bt = Vector::zeros(mt);
    for (ri, &i) in w_rows.iter().enumerate() {
        let q2row = q2.row(ri);
        for &(j, v) in &rows[i].x {
            for c in 0..k2 {
                at[(c, j)] += v * q2row[c];
            }
        }
        for c in 0..k2 {
            bt[c] += rows[i].rhs * q2row[c];
        }
    }
    for (pi, &i) in pure_rows.iter().enumerate() {
        for &(j, v) in &rows[i].x {
            at[(k2 + pi, j)] += v;
        }
        bt[k2 + pi] = rows[i].rhs;
    }
    // Normalize and drop dependent rows. Projected rows that vanish to
    // rounding level carry no constraint and must not be amplified.
    for r in 0..mt {
        let n = at.row(r).norm();
        if n < ZERO_ROW_TOL {
            if bt[r].abs() > 1e-8 {
                return Err(DwellError::InfeasibleEqualities { residual: bt[r].abs() });
            }
            at.row_mut(r).fill(0.0);
            bt[r] = 0.0;
        } else {
            at.row_mut(r).scale_mut(1.0 / n);
            bt[r] /= n;
        }
        for v in at.row_mut(r).iter_mut() {
            if v.abs() < DROP_TOL {
                *v = 0.0;
            }
        }
    }
    let rq = PivotedQr::new(&at.transpose(), ROW_RANK_TOL);
    let keep: Vec<usize> = rq.perm[..rq.rank].to_vec();
    if rq.rank < mt {
        let coords = rq.dependent_coords();
        for (d, &row) in rq.perm[rq.rank..].iter().enumerate() {
            let pred: f64 = (0..rq.rank).map(|k| coords[(k, d)] * bt[keep[k]]).sum();
            let res = (pred - bt[row]).abs();
            // Near-dependent rows can disagree at rounding scale amplified by
            // the solution size; the final check on the original problem decides.
            if res > DEPENDENT_ROW_TOL * (1.0 + bt[row].abs()) {
                return Err(DwellError::InfeasibleEqualities { residual: res });
            }
            if res > 1e-10 {
                log::debug!("dropped near-dependent row with mismatch {res:e}");
            }
        }
    }
    let mut sorted_keep = keep.clone();
    sorted_keep.sort_unstable();
    let nb = lay.sizes.len();
    let mut a = Vec::with_capacity(sorted_keep.len());
    let mut b = Vector::zeros(sorted_keep.len());
    for (ri, &r) in sorted_keep.iter().enumerate() {
        let mut per_block = Vec::with_capacity(nb);
        for blk in 0..nb {
            let n = lay.sizes[blk];
            let mut mblk = Matrix::zeros(n, n);
            let mut any = false;
            for j in 0..n {
                for i in 0..=j {
                    let v = at[(r, lay.idx(blk, i, j))];
                    if v != 0.0 {
                        any = true;
                        let e = v * Layout::entry_scale(i, j);
                        mblk[(i, j)] = e;
                        mblk[(j, i)] = e;
                    }
                }
            }
            per_block.push(if any { Some(mblk) } else { None });
        }
        a.push(per_block);
        b[ri] = bt[r];
    }
    let mut c: Vec<Matrix> = lay.sizes.iter().map(|&n| Matrix::zeros(n, n)).collect();
    c[lay.cap_block][(0, 0)] = 1.0;
    Ok(Reduction { sdp: StdSdp { sizes: lay.sizes.clone(), a, c, b }, w_rows, rows, qr, colscale })
}

/// The margin must not lie in the null space of the free-variable map.
fn check_margin_identifiable(qr: &PivotedQr, t_col: usize) -> Result<()> {
    let pos = qr.perm.iter().position(|&c| c == t_col).unwrap();
    if pos >= qr.rank {
        return Err(DwellError::InvalidInput("margin variable is not determined by the constraints".into()));
    }
    let coords = qr.dependent_coords();
    if coords.ncols() > 0 && coords.row(pos).amax() > 1e-8 {
        return Err(DwellError::InvalidInput("margin variable lies in a gauge direction".into()));
    }
    Ok(())
}

fn svec_of(lay: &Layout, x: &[Matrix]) -> Vec<f64> {
    let mut out = vec![0.0; lay.nx];
    for (b, xb) in x.iter().enumerate() {
        for j in 0..lay.sizes[b] {
            for i in 0..=j {
                out[lay.idx(b, i, j)] = xb[(i, j)] / Layout::entry_scale(i, j);
            }
        }
    }
    out
}

fn recover_y(p: &LmiProblem, lay: &Layout, red: &Reduction, x: &[Matrix]) -> (Vector, f64) {
    let xs = svec_of(lay, x);
    let rhs = Vector::from_iterator(
        red.w_rows.len(),
        red.w_rows.iter().map(|&i| red.rows[i].rhs - red.rows[i].x.iter().map(|&(j, v)| v * xs[j]).sum::<f64>()),
    );
    let ws = red.qr.solve_basic(&rhs);
    let w: Vec<f64> = ws.iter().zip(&red.colscale).map(|(a, s)| a * s).collect();
    let t = w[lay.t_col];
    let mut y = Vector::zeros(p.num_vars);
    for k in 0..p.num_vars {
        y[k] = match (lay.owner[k], lay.wcol[k]) {
            (Some(o), _) => {
                let f0 = entry_of(&p.blocks[o.block].constant.entries, o.i, o.j);
                let xe = x[o.block][(o.i, o.j)];
                let td = if o.i == o.j { t } else { 0.0 };
                (xe - f0 + td) / o.coef
            }
            (None, Some(c)) => w[c],
            (None, None) => 0.0,
        };
    }
    (y, t)
}

/// Minimum-norm correction onto `E y = f`.
fn polish(p: &LmiProblem, y: &mut Vector) {
    let q = p.equalities.len();
    if q == 0 {
        return;
    }
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.num_vars];
    for (r, eq) in p.equalities.iter().enumerate() {
        for &(k, c) in &eq.coeffs {
            cols[k].push((r, c));
        }
    }
    let mut g = Matrix::zeros(q, q);
    for col in &cols {
        for &(r1, c1) in col {
            for &(r2, c2) in col {
                g[(r1, r2)] += c1 * c2;
            }
        }
    }
    let shift = 1e-13 * (1.0 + g.diagonal().amax());
    for i in 0..q {
        g[(i, i)] += shift;
    }
    let Some(ch) = Cholesky::new(g) else { return };
    for _ in 0..3 {
        let r = Vector::from_iterator(q, p.equalities.iter().map(|e| e.residual(y.as_slice())));
        if r.amax() <= 1e-14 {
            break;
        }
        let z = ch.solve(&r);
        for (k, col) in cols.iter().enumerate() {
            let d: f64 = col.iter().map(|&(row, c)| c * z[row]).sum();
            y[k] -= d;
        }
    }
}

pub(crate) fn solve(p: &LmiProblem, opts: &SolverOptions) -> Result<SolverResult> {
    let lay = layout(p);
    let mut trust = opts.trust_radius;
    let mut last: Option<SolverResult> = None;
    for attempt in 0..TRUST_ATTEMPTS {
        let rows = build_rows(p, &lay, opts.margin_cap, trust);
        let red = reduce(&lay, rows)?;
        let out = ipm::solve(&red.sdp, &IpmSettings { tol: opts.gap_tol, max_iter: opts.max_iter });
        let (mut y, t) = recover_y(p, &lay, &red, &out.x);
        polish(p, &mut y);
        let report = check_solution(p, y.as_slice(), t)?;
        let feas_tol = opts.feas_tol.unwrap_or(1e-7 * (1.0 + report.max_block_norm));
        let eq_ok = report.equality_residual <= opts.eq_tol;
        let certified = report.margin >= feas_tol && eq_ok;
        let trace_slack = out.x[lay.trace_block][(0, 0)];
        let trace_active = trace_slack <= 1e-3 * trust;
        let status = if certified {
            SolveStatus::Certified
        } else if out.converged {
            SolveStatus::NotCertified
        } else {
            SolveStatus::NumericFailure
        };
        log::debug!(
            "solve attempt {attempt}: status {status:?}, t {t:.6e}, objective {:.6e}, margin {:.6e}, eq {:.2e}, iters {}, {}",
            out.pobj,
            report.margin,
            report.equality_residual,
            out.iterations,
            out.message
        );
        let result = SolverResult {
            status,
            y,
            margin: report.margin,
            ipm_margin: t,
            feas_tol,
            iterations: out.iterations,
            residuals: Residuals { equality_residual: report.equality_residual, min_block_eig: report.margin },
            message: out.message,
        };
        if status == SolveStatus::Certified || (!trace_active && out.converged) {
            return Ok(result);
        }
        last = Some(result);
        trust *= TRUST_GROWTH;
    }
    Ok(last.unwrap())
}
