use crate::conditions::{Domain, DwellCertificate, SwitchedSystem};
use crate::error::{invalid, mismatch, Result};
use crate::linalg::{expm, Matrix, Vector};
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Zero-based active mode.
    pub mode: usize,
    /// Index of the dwell interval in the switching sequence.
    pub interval: usize,
    pub x: Vector,
    pub v: f64,
}

/// Change of `V` across a switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub jumps: Vec<Jump>,
}

/// States over one dwell interval, times measured from its start.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trajectory {
    /// Samples of interval `k`, shifted to start at `τ = 0`.
    pub fn segment(&self, k: usize) -> Option<Segment> {
        let s: Vec<&Sample> = self.samples.iter().filter(|s| s.interval == k).collect();
        let t0 = s.first()?.t;
        Some(Segment { times: s.iter().map(|s| s.t - t0).collect(), states: s.iter().map(|s| s.x.clone()).collect() })
    }

    pub fn final_state(&self) -> Option<&Vector> {
        self.samples.last().map(|s| &s.x)
    }
}

fn quad(p: &Matrix, x: &Vector) -> f64 {
    x.dot(&(p * x))
}

/// Piecewise exact propagation of `ẋ = A_σ x` along `sequence` of
/// `(mode, dwell)` pairs, sampled every `dt` at most. `V` uses `lyapunov`
/// when given and `‖x‖²` otherwise. Each interval contributes its start and
/// end sample, so switch instants appear twice.
pub fn simulate(sys: &SwitchedSystem, sequence: &[(usize, f64)], x0: &Vector, dt: f64, lyapunov: Option<&[Matrix]>) -> Result<Trajectory> {
    if sequence.is_empty() {
        return invalid("switching sequence is empty");
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return invalid(format!("sampling step must be positive, got {dt}"));
    }
    if x0.len() != sys.n {
        return mismatch(format!("initial state has length {}, state dimension {}", x0.len(), sys.n));
    }
    if let Some(p) = lyapunov {
        if p.len() != sys.num_modes() || p.iter().any(|m| m.nrows() != sys.n || m.ncols() != sys.n) {
            return mismatch("Lyapunov matrices do not match the system");
        }
    }
    let v = |mode: usize, x: &Vector| match lyapunov {
        Some(p) => quad(&p[mode], x),
        None => x.norm_squared(),
    };
    let mut samples = Vec::new();
    let mut jumps = Vec::new();
    let mut x = x0.clone();
    let mut t0 = 0.0;
    for (k, &(mode, dwell)) in sequence.iter().enumerate() {
        if mode >= sys.num_modes() {
            return invalid(format!("mode {} out of range", mode + 1));
        }
        if !(dwell >= 0.0) || !dwell.is_finite() {
            return invalid(format!("dwell-time must be nonnegative and finite, got {dwell}"));
        }
        if let Some(prev) = samples.last().map(|s: &Sample| (s.mode, s.v)) {
            jumps.push(Jump { t: t0, from: prev.0, to: mode, before: prev.1, after: v(mode, &x) });
        }
        samples.push(Sample { t: t0, mode, interval: k, x: x.clone(), v: v(mode, &x) });
        let steps = (dwell / dt).ceil().max(1.0) as usize;
        let h = dwell / steps as f64;
        let e = expm(&sys.modes[mode], h)?;
        for s in 1..=steps {
            x = &e * &x;
            let t = t0 + h * s as f64;
            samples.push(Sample { t, mode, interval: k, x: x.clone(), v: v(mode, &x) });
        }
        t0 += dwell;
    }
    Ok(Trajectory { samples, jumps })
}

/// Writes `t,mode,x1..xn,V` with 17 significant digits; modes are 1-based.
pub fn write_trace_csv(traj: &Trajectory, mut out: impl Write) -> Result<()> {
    let n = traj.samples.first().map_or(0, |s| s.x.len());
    let mut header = String::from("t,mode");
    for k in 1..=n {
        header.push_str(&format!(",x{k}"));
    }
    header.push_str(",V");
    writeln!(out, "{header}")?;
    for s in &traj.samples {
        let mut line = format!("{:.16e},{}", s.t, s.mode + 1);
        for v in s.x.iter() {
            line.push_str(&format!(",{v:.16e}"));
        }
        line.push_str(&format!(",{:.16e}", s.v));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// `W_ij(τ) = T·x(τ)ᵀP_i x(τ) + ξ(τ)ᵀZ_ij ξ(τ) + τ·x(0)ᵀ(P_i − P_j + εI)x(0)`,
/// `ξ = (x(τ), x(0), x(T))`, sampled at the segment times. `T` is the segment
/// length; it must equal `T̄` for an interval certificate and lie in the
/// dwell range for a box certificate.
pub fn eval_looped_functional(cert: &DwellCertificate, seg: &Segment, i: usize, j: usize) -> Result<Vec<f64>> {
    let z = cert.z_for(i, j).ok_or_else(|| crate::error::DwellError::InvalidInput(format!("certificate has no Z for pair ({}, {})", i + 1, j + 1)))?;
    if seg.times.len() != seg.states.len() || seg.times.len() < 2 {
        return mismatch("segment needs matching times and states, at least two samples");
    }
    let n = cert.p[i].nrows();
    if seg.states.iter().any(|x| x.len() != n) {
        return mismatch("segment state dimension does not match the certificate");
    }
    if seg.times[0].abs() > 1e-12 {
        return invalid("segment must start at τ = 0");
    }
    let big_t = *seg.times.last().unwrap();
    let scale = big_t.abs().max(1.0);
    match z.domain {
        Domain::Interval { tbar } => {
            if (big_t - tbar).abs() > 1e-9 * scale {
                return mismatch(format!("segment length {big_t} differs from the certified dwell-time {tbar}"));
            }
        }
        Domain::Box { tmin, tmax } => {
            if big_t < tmin - 1e-9 * scale || big_t > tmax + 1e-9 * scale {
                return mismatch(format!("segment length {big_t} outside [{tmin}, {tmax}]"));
            }
        }
    }
    let x0 = &seg.states[0];
    let xt = seg.states.last().unwrap();
    let mid = &cert.p[i] - &cert.p[j] + Matrix::identity(n, n) * cert.eps.unwrap_or(0.0);
    let c0 = quad(&mid, x0);
    let mut out = Vec::with_capacity(seg.times.len());
    for (t, x) in seg.times.iter().zip(&seg.states) {
        let mut xi = Vector::zeros(3 * n);
        xi.rows_mut(0, n).copy_from(x);
        xi.rows_mut(n, n).copy_from(x0);
        xi.rows_mut(2 * n, n).copy_from(xt);
        let zt = match z.domain {
            Domain::Interval { .. } => z.poly.eval(&[*t])?,
            Domain::Box { .. } => z.poly.eval(&[*t, big_t])?,
        };
        out.push(big_t * quad(&cert.p[i], x) + quad(&zt, &xi) + t * c0);
    }
    Ok(out)
}
