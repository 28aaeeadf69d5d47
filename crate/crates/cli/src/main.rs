use clap::{Args, Parser, Subcommand, ValueEnum};
use dwell_core::conditions::{build, ConditionOptions, DwellQuery, DwellRange, Method, QueryKind, SwitchedSystem};
use dwell_core::conic::{eliminate_equalities, export_sdpa};
use dwell_core::io::{certificate_to_json, read_certificate, read_problem};
use dwell_core::search::{
    max_upper_dwell, min_dwell_bisect, periodic_critical, robust_sweep, SearchOptions, DWELL_CAP, PERIODIC_TOL,
};
use dwell_core::verify::{self, simulate, verify_certificate, write_trace_csv};
use dwell_core::DwellError;
use dwell_core::linalg::Vector;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dwell", version, about = "Dwell-time certificates for switched linear systems")]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Bisection searches over certified dwell-times.
    #[command(subcommand)]
    Search(SearchCmd),
    /// Re-check a certificate against a problem.
    Check {
        problem: PathBuf,
        certificate: PathBuf,
        /// Grid points per time variable.
        #[arg(long, default_value_t = verify::DEFAULT_GRID)]
        grid: usize,
    },
    /// Necessary-condition oracles.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Simulate a switching sequence and write a CSV trace.
    Simulate(SimulateArgs),
    /// Export the LMI problem of a query.
    #[command(subcommand)]
    Export(ExportCmd),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exp,
    Affine,
}

#[derive(Args, Clone)]
struct Common {
    /// Absolute bisection tolerance.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Largest dwell-time probed.
    #[arg(long, default_value_t = DWELL_CAP)]
    cap: f64,
}

impl Common {
    fn options(&self) -> SearchOptions {
        SearchOptions { tol: self.tol, cap: self.cap, ..SearchOptions::default() }
    }
}

#[derive(Subcommand)]
enum SearchCmd {
    /// Smallest certified minimum dwell-time.
    MinDwell {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Exp)]
        method: MethodArg,
        #[arg(long, default_value_t = 2)]
        degree: u32,
        #[command(flatten)]
        common: Common,
        /// Where to write the certificate at the reported bound.
        #[arg(long, default_value = "certificate.json")]
        cert_out: PathBuf,
    },
    /// Largest certified upper dwell-time of one mode, other ranges fixed.
    ModeDep {
        file: PathBuf,
        /// 1-based mode whose upper dwell-time is maximized.
        #[arg(long)]
        target_mode: usize,
        /// Degrees of `Z`; `0` selects the gridded exponential oracle.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        degree: Vec<u32>,
        /// Minimum dwell-time of the target mode.
        #[arg(long, default_value_t = 0.001)]
        target_tmin: f64,
        /// Fixed range of another mode, `K=TMIN[:TMAX]`.
        #[arg(long = "range")]
        ranges: Vec<String>,
        /// One column per value of another mode's minimum dwell-time, `K=V1,V2,...`.
        #[arg(long)]
        sweep: Option<String>,
        /// Adds the periodic-switching oracle row (two-mode systems).
        #[arg(long)]
        periodic: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Robust minimum dwell-time over a list of uncertainty amplitudes.
    Robust {
        file: PathBuf,
        /// Uncertainty amplitudes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        kappas: Vec<f64>,
        /// Degrees of `Z`; `0` selects the gridded exponential baseline.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        degrees: Vec<u32>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Critical free dwell of the periodic cycle 1 → 2 → … → N.
    Periodic {
        file: PathBuf,
        /// Fixed dwells, `T1=1.0` (repeatable or comma separated).
        #[arg(long, value_delimiter = ',', required = true)]
        fixed: Vec<String>,
        #[arg(long, default_value_t = PERIODIC_TOL)]
        tol: f64,
    },
}

#[derive(Args)]
struct SimulateArgs {
    problem: PathBuf,
    /// Switching sequence `MODE:DWELL,...` with 1-based modes.
    #[arg(long, required = true)]
    sequence: String,
    /// Repeat the sequence this many times.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    x0: Vec<f64>,
    /// Largest sampling step; each dwell is split into equal exact steps.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Certificate whose `P_i` define `V`; `‖x‖²` otherwise.
    #[arg(long)]
    certificate: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExportCmd {
    /// SDPA sparse format, equalities eliminated, margin as epigraph variable.
    Sdpa {
        problem: PathBuf,
        /// Dwell-time of a min-dwell query; defaults to the file's query.
        #[arg(long)]
        tbar: Option<f64>,
        #[arg(long)]
        degree: Option<u32>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit codes: 0 pass, 1 not certified or failed check, 2 input error, 3 numeric failure.
enum Failure {
    NotCertified(String),
    Input(String),
    Numeric(String),
}

impl From<DwellError> for Failure {
    fn from(e: DwellError) -> Self {
        match e {
            DwellError::NotCertified | DwellError::Search(_) => Failure::NotCertified(e.to_string()),
            DwellError::InvalidInput(_) | DwellError::DimensionMismatch(_) | DwellError::Parse(_) | DwellError::Io(_) => {
                Failure::Input(e.to_string())
            }
            DwellError::NumericRange(_) | DwellError::NonConvergence { .. } | DwellError::InfeasibleEqualities { .. } => {
                Failure::Numeric(e.to_string())
            }
        }
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn method_of(m: MethodArg, degree: u32) -> Method {
    match m {
        MethodArg::Exp => Method::Exponential,
        MethodArg::Affine => Method::Affine { degree },
    }
}

fn method_from_degree(d: u32) -> Method {
    if d == 0 {
        Method::Exponential
    } else {
        Method::Affine { degree: d }
    }
}

fn method_label(m: Method) -> String {
    match m {
        Method::Exponential => "exp".into(),
        Method::Affine { degree } => format!("d={degree}"),
    }
}

fn emit(format: Format, text: &str, value: serde_json::Value) {
    match format {
        Format::Text => println!("{text}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&value).expect("report serializes")),
    }
}

fn input<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Input(msg.into()))
}

fn parse_mode(s: &str, n: usize, what: &str) -> Result<usize, Failure> {
    let k: usize = s.trim().trim_start_matches(['T', 't']).parse().map_err(|_| Failure::Input(format!("{what}: bad mode `{s}`")))?;
    if k == 0 || k > n {
        return input(format!("{what}: mode {k} outside 1..={n}"));
    }
    Ok(k - 1)
}

fn parse_f64(s: &str, what: &str) -> Result<f64, Failure> {
    s.trim().parse().map_err(|_| Failure::Input(format!("{what}: bad number `{s}`")))
}

fn load(path: &Path) -> Result<(SwitchedSystem, Option<DwellQuery>), Failure> {
    Ok(read_problem(path)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn search_min_dwell(format: Format, file: &Path, method: Method, common: &Common, cert_out: &Path) -> CmdResult {
    let (sys, _) = load(file)?;
    let r = min_dwell_bisect(&sys, method, &common.options())?;
    write_file(cert_out, &certificate_to_json(&r.certificate))?;
    let text = format!(
        "minimum dwell-time upper bound ({}): {:.6} (not certified at {})\ncertificate written to {}",
        method_label(method),
        r.value,
        r.other.map_or("-".into(), |v| format!("{v:.6}")),
        cert_out.display()
    );
    emit(
        format,
        &text,
        json!({"method": method_label(method), "value": r.value, "not_certified_at": r.other,
               "probes": r.probes.len(), "non_monotone": r.non_monotone, "certificate": cert_out.display().to_string()}),
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_range(spec: &str, n: usize) -> Result<(usize, DwellRange), Failure> {
    let (k, v) = spec.split_once('=').ok_or_else(|| Failure::Input(format!("--range `{spec}`: expected K=TMIN[:TMAX]")))?;
    let k = parse_mode(k, n, "--range")?;
    let (lo, hi) = match v.split_once(':') {
        Some((lo, hi)) if hi.trim() == "inf" => (lo, None),
        Some((lo, hi)) => (lo, Some(parse_f64(hi, "--range")?)),
        None => (v, None),
    };
    Ok((k, DwellRange { tmin: parse_f64(lo, "--range")?, tmax: hi }))
}

#[allow(clippy::too_many_arguments)]
fn search_mode_dep(
    format: Format,
    file: &Path,
    target: usize,
    degrees: &[u32],
    target_tmin: f64,
    range_specs: &[String],
    sweep: Option<&str>,
    periodic: bool,
    common: &Common,
) -> CmdResult {
    let (sys, query) = load(file)?;
    let n = sys.num_modes();
    let target = parse_mode(&target.to_string(), n, "--target-mode")?;
    let mut ranges: Vec<Option<DwellRange>> = match query {
        Some(DwellQuery { kind: QueryKind::ModeDependent { ranges }, .. }) => ranges.into_iter().map(Some).collect(),
        _ => vec![None; n],
    };
    for spec in range_specs {
        let (k, r) = parse_range(spec, n)?;
        ranges[k] = Some(r);
    }
    ranges[target] = Some(DwellRange { tmin: target_tmin, tmax: None });
    let (sweep_mode, columns) = match sweep {
        Some(s) => {
            let (k, vals) = s.split_once('=').ok_or_else(|| Failure::Input("--sweep: expected K=V1,V2,...".into()))?;
            let k = parse_mode(k, n, "--sweep")?;
            if k == target {
                return input("--sweep must name a mode other than the target");
            }
            let vals = vals.split(',').map(|v| parse_f64(v, "--sweep")).collect::<Result<Vec<_>, _>>()?;
            (Some(k), vals)
        }
        None => (None, vec![f64::NAN]),
    };
    if periodic && n != 2 {
        return input("--periodic needs a two-mode system");
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let header: Vec<String> = columns.iter().map(|c| if c.is_nan() { "value".into() } else { format!("{c}") }).collect();
    lines.push(format!("{:>10} {}", "", header.iter().map(|h| format!("{h:>10}")).collect::<String>()));
    let opts = common.options();
    for &d in degrees {
        let method = method_from_degree(d);
        let mut vals = Vec::new();
        for &c in &columns {
            let mut r = ranges.clone();
            if let Some(k) = sweep_mode {
                r[k] = Some(DwellRange { tmin: c, tmax: r[k].and_then(|x| x.tmax) });
            }
            let r: Vec<DwellRange> = match r.into_iter().enumerate().map(|(k, x)| x.ok_or(k)).collect::<Result<_, _>>() {
                Ok(r) => r,
                Err(k) => return input(format!("no dwell range given for mode {}", k + 1)),
            };
            let v = match max_upper_dwell(&sys, target, &r, method, &opts) {
                Ok(rep) => Some(rep.value),
                Err(DwellError::Search(msg)) => {
                    log::warn!("{}: {msg}", method_label(method));
                    None
                }
                Err(e) => return Err(e.into()),
            };
            vals.push(v);
        }
        lines.push(format!("{:>10} {}", method_label(method), fmt_row(&vals)));
        rows.push(json!({"method": method_label(method), "values": vals}));
    }
    if periodic {
        let other = 1 - target;
        let mut vals = Vec::new();
        for &c in &columns {
            let fixed = if c.is_nan() { ranges[other].map(|r| r.tmin).unwrap_or(f64::NAN) } else { c };
            let mut cycle = vec![(0, None), (1, None)];
            cycle[other].1 = Some(fixed);
            vals.push(periodic_critical(&sys, &cycle, PERIODIC_TOL).ok());
        }
        lines.push(format!("{:>10} {}", "periodic", fmt_row(&vals)));
        rows.push(json!({"method": "periodic", "values": vals}));
    }
    emit(format, &lines.join("\n"), json!({"target_mode": target + 1, "columns": columns.iter().map(|c| if c.is_nan() { None } else { Some(*c) }).collect::<Vec<_>>(), "rows": rows}));
    Ok(ExitCode::SUCCESS)
}

fn fmt_row(vals: &[Option<f64>]) -> String {
    vals.iter().map(|v| v.map_or(format!("{:>10}", "-"), |v| format!("{v:>10.4}"))).collect()
}

fn search_robust(format: Format, file: &Path, kappas: &[f64], degrees: &[u32], common: &Common) -> CmdResult {
    let (sys, _) = load(file)?;
    let methods: Vec<Method> = degrees.iter().map(|&d| method_from_degree(d)).collect();
    let table = robust_sweep(&sys, kappas, &methods, &common.options())?;
    let mut lines = vec![format!("{:>10} {}", "κ", kappas.iter().map(|k| format!("{k:>10}")).collect::<String>())];
    for row in &table.rows {
        lines.push(format!("{:>10} {}", method_label(row.method), fmt_row(&row.values)));
    }
    for f in &table.flags {
        lines.push(format!("flag: {f}"));
    }
    emit(format, &lines.join("\n"), serde_json::to_value(&table).expect("table serializes"));
    Ok(ExitCode::SUCCESS)
}

fn check(format: Format, problem: &Path, certificate: &Path, grid: usize) -> CmdResult {
    let (sys, _) = load(problem)?;
    let cert = read_certificate(certificate)?;
    let rep = verify_certificate(&sys, &cert, grid)?;
    let mut lines: Vec<String> = rep
        .entries
        .iter()
        .map(|e| format!("{:<4} {:<40} {:+.6e}", if e.ok { "ok" } else { "FAIL" }, e.label, e.value))
        .collect();
    lines.push(if rep.pass { "PASS".into() } else { "FAIL".into() });
    emit(format, &lines.join("\n"), serde_json::to_value(&rep).expect("report serializes"));
    Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn oracle_periodic(format: Format, file: &Path, fixed: &[String], tol: f64) -> CmdResult {
    let (sys, _) = load(file)?;
    let n = sys.num_modes();
    let mut cycle: Vec<(usize, Option<f64>)> = (0..n).map(|k| (k, None)).collect();
    for spec in fixed {
        let (k, v) = spec.split_once('=').ok_or_else(|| Failure::Input(format!("--fixed `{spec}`: expected Tk=VALUE")))?;
        let k = parse_mode(k, n, "--fixed")?;
        cycle[k].1 = Some(parse_f64(v, "--fixed")?);
    }
    let free = cycle.iter().position(|c| c.1.is_none());
    let t = periodic_critical(&sys, &cycle, tol)?;
    let free = free.map_or(0, |k| k + 1);
    emit(format, &format!("critical dwell of mode {free}: {t:.6}"), json!({"free_mode": free, "critical": t}));
    Ok(ExitCode::SUCCESS)
}

fn simulate_cmd(a: &SimulateArgs) -> CmdResult {
    let (sys, _) = load(&a.problem)?;
    let mut seq = Vec::new();
    for item in a.sequence.split(',') {
        let (m, d) = item.split_once(':').ok_or_else(|| Failure::Input(format!("--sequence `{item}`: expected MODE:DWELL")))?;
        seq.push((parse_mode(m, sys.num_modes(), "--sequence")?, parse_f64(d, "--sequence")?));
    }
    let seq: Vec<(usize, f64)> = seq.iter().cycle().take(seq.len() * a.repeat).copied().collect();
    let p = a.certificate.as_deref().map(read_certificate).transpose()?.map(|c| c.p);
    let tr = simulate(&sys, &seq, &Vector::from_vec(a.x0.clone()), a.dt, p.as_deref())?;
    let file = std::fs::File::create(&a.out).map_err(|e| Failure::Input(format!("{}: {e}", a.out.display())))?;
    write_trace_csv(&tr, std::io::BufWriter::new(file))?;
    Ok(ExitCode::SUCCESS)
}

fn export(problem: &Path, tbar: Option<f64>, degree: Option<u32>, method: Option<MethodArg>, out: &Path) -> CmdResult {
    let (sys, file_query) = load(problem)?;
    let query = match (tbar, file_query) {
        (Some(tbar), _) => {
            let method = method.unwrap_or(if degree.is_some() { MethodArg::Affine } else { MethodArg::Exp });
            DwellQuery { kind: QueryKind::MinDwell { tbar }, method: method_of(method, degree.unwrap_or(2)) }
        }
        (None, Some(q)) => q,
        (None, None) => return input("no --tbar given and the problem file has no query"),
    };
    let built = build(&sys, &query, &ConditionOptions::default())?;
    let (reduced, _) = eliminate_equalities(&built.problem)?;
    write_file(out, &export_sdpa(&reduced, true)?)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> CmdResult {
    let f = cli.format;
    match cli.command {
        Command::Search(SearchCmd::MinDwell { file, method, degree, common, cert_out }) => {
            search_min_dwell(f, &file, method_of(method, degree), &common, &cert_out)
        }
        Command::Search(SearchCmd::ModeDep { file, target_mode, degree, target_tmin, ranges, sweep, periodic, common }) => {
            search_mode_dep(f, &file, target_mode, &degree, target_tmin, &ranges, sweep.as_deref(), periodic, &common)
        }
        Command::Search(SearchCmd::Robust { file, kappas, degrees, common }) => search_robust(f, &file, &kappas, &degrees, &common),
        Command::Check { problem, certificate, grid } => check(f, &problem, &certificate, grid),
        Command::Oracle(OracleCmd::Periodic { file, fixed, tol }) => oracle_periodic(f, &file, &fixed, tol),
        Command::Simulate(a) => simulate_cmd(&a),
        Command::Export(ExportCmd::Sdpa { problem, tbar, degree, method, out }) => export(&problem, tbar, degree, method, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::NotCertified(m)) => {
            eprintln!("not certified: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("numeric failure: {m}");
            ExitCode::from(3)
        }
    }
}
