//! JSON problem and certificate files.
//!
//! Matrices are lists of rows; modes are numbered from 1. Floats are written
//! in the shortest form that parses back to the identical `f64`.

use crate::conditions::{
    Domain, DwellCertificate, DwellQuery, DwellRange, Method, PairPoly, QueryKind, SwitchedSystem, UncertaintyChannel,
};
use crate::error::{DwellError, Result};
use crate::linalg::Matrix;
use crate::polymat::PolyMat;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    #[serde(rename = "U")]
    pub u: Rows,
    #[serde(rename = "V")]
    pub v: Rows,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKindName {
    MinDwell,
    ModeDependent,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[serde(alias = "exponential")]
    Exp,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryFile {
    pub kind: QueryKindName,
    pub method: MethodName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<Vec<DwellRange>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub modes: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<Vec<ChannelFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryFile>,
}

fn parse_err(what: &str, e: serde_json::Error) -> DwellError {
    DwellError::Parse(format!("{what}: {e}"))
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> DwellError {
    DwellError::Parse(format!("field `{field}`: {msg}"))
}

pub fn rows_to_matrix(rows: &Rows, field: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(field_err(field, "empty matrix"));
    }
    if let Some(k) = rows.iter().position(|row| row.len() != c) {
        return Err(field_err(field, format!("row {} has {} entries, expected {c}", k + 1, rows[k].len())));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl QueryFile {
    pub fn to_query(&self) -> Result<DwellQuery> {
        let method = match (self.method, self.degree) {
            (MethodName::Exp, None) => Method::Exponential,
            (MethodName::Exp, Some(_)) => return Err(field_err("query.degree", "only used by the affine method")),
            (MethodName::Affine, Some(degree)) => Method::Affine { degree },
            (MethodName::Affine, None) => return Err(field_err("query.degree", "required by the affine method")),
        };
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| field_err(&format!("query.{name}"), "missing"));
        let forbid = |present: bool, name: &str| if present { Err(field_err(&format!("query.{name}"), "not used by this query kind")) } else { Ok(()) };
        let kind = match self.kind {
            QueryKindName::MinDwell => {
                forbid(self.kappa.is_some(), "kappa")?;
                forbid(self.ranges.is_some(), "ranges")?;
                QueryKind::MinDwell { tbar: need(self.tbar, "tbar")? }
            }
            QueryKindName::Robust => {
                forbid(self.ranges.is_some(), "ranges")?;
                QueryKind::Robust { tbar: need(self.tbar, "tbar")?, kappa: need(self.kappa, "kappa")? }
            }
            QueryKindName::ModeDependent => {
                forbid(self.tbar.is_some(), "tbar")?;
                forbid(self.kappa.is_some(), "kappa")?;
                QueryKind::ModeDependent { ranges: self.ranges.clone().ok_or_else(|| field_err("query.ranges", "missing"))? }
            }
        };
        Ok(DwellQuery { kind, method })
    }

    pub fn from_query(q: &DwellQuery) -> Self {
        let (method, degree) = match q.method {
            Method::Exponential => (MethodName::Exp, None),
            Method::Affine { degree } => (MethodName::Affine, Some(degree)),
        };
        let mut f = QueryFile { kind: QueryKindName::MinDwell, method, degree, tbar: None, kappa: None, ranges: None };
        match &q.kind {
            QueryKind::MinDwell { tbar } => f.tbar = Some(*tbar),
            QueryKind::Robust { tbar, kappa } => {
                f.kind = QueryKindName::Robust;
                f.tbar = Some(*tbar);
                f.kappa = Some(*kappa);
            }
            QueryKind::ModeDependent { ranges } => {
                f.kind = QueryKindName::ModeDependent;
                f.ranges = Some(ranges.clone());
            }
        }
        f
    }
}

impl ProblemFile {
    pub fn to_system(&self) -> Result<(SwitchedSystem, Option<DwellQuery>)> {
        if self.modes.is_empty() {
            return Err(field_err("modes", "at least one mode is required"));
        }
        let mut modes = Vec::new();
        for (k, rows) in self.modes.iter().enumerate() {
            let field = format!("modes[{}]", k + 1);
            let a = rows_to_matrix(rows, &field)?;
            if a.nrows() != self.n || a.ncols() != self.n {
                return Err(field_err(&field, format!("is {}x{}, but n = {}", a.nrows(), a.ncols(), self.n)));
            }
            modes.push(a);
        }
        let mut sys = SwitchedSystem::new(modes)?;
        if let Some(ch) = &self.uncertainty {
            let mut channels = Vec::new();
            for (k, c) in ch.iter().enumerate() {
                let u = rows_to_matrix(&c.u, &format!("uncertainty[{}].U", k + 1))?;
                let v = rows_to_matrix(&c.v, &format!("uncertainty[{}].V", k + 1))?;
                channels.push(UncertaintyChannel { u, v, kappa: c.kappa });
            }
            sys = sys.with_uncertainty(channels)?;
        }
        let query = self.query.as_ref().map(QueryFile::to_query).transpose()?;
        if let Some(DwellQuery { kind: QueryKind::ModeDependent { ranges }, .. }) = &query {
            if ranges.len() != sys.num_modes() {
                return Err(field_err("query.ranges", format!("{} ranges for {} modes", ranges.len(), sys.num_modes())));
            }
        }
        Ok((sys, query))
    }

    pub fn from_system(sys: &SwitchedSystem, query: Option<&DwellQuery>) -> Self {
        ProblemFile {
            n: sys.n,
            modes: sys.modes.iter().map(matrix_to_rows).collect(),
            uncertainty: sys.uncertainty.as_ref().map(|ch| {
                ch.iter().map(|c| ChannelFile { u: matrix_to_rows(&c.u), v: matrix_to_rows(&c.v), kappa: c.kappa }).collect()
            }),
            query: query.map(QueryFile::from_query),
        }
    }
}

pub fn parse_problem(text: &str) -> Result<(SwitchedSystem, Option<DwellQuery>)> {
    let f: ProblemFile = serde_json::from_str(text).map_err(|e| parse_err("problem file", e))?;
    f.to_system()
}

pub fn read_problem(path: &Path) -> Result<(SwitchedSystem, Option<DwellQuery>)> {
    let text = std::fs::read_to_string(path).map_err(|e| DwellError::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_problem(&text).map_err(|e| match e {
        DwellError::Parse(m) => DwellError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn problem_to_json(sys: &SwitchedSystem, query: Option<&DwellQuery>) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_system(sys, query)).expect("problem serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermFile {
    pub exponent: Vec<u32>,
    pub coeff: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPolyFile {
    /// 1-based active mode.
    pub i: usize,
    /// 1-based previous mode.
    pub j: usize,
    pub domain: Domain,
    pub terms: Vec<TermFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub query: QueryFile,
    #[serde(rename = "P")]
    pub p: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(rename = "Z", default, skip_serializing_if = "Vec::is_empty")]
    pub z: Vec<PairPolyFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu_poly: Vec<PairPolyFile>,
    pub margin: f64,
}

fn pair_to_file(p: &PairPoly) -> PairPolyFile {
    let vars = p.domain.vars();
    PairPolyFile {
        i: p.i + 1,
        j: p.j + 1,
        domain: p.domain,
        terms: p.poly.coeffs.iter().map(|(e, c)| TermFile { exponent: e[..vars].to_vec(), coeff: matrix_to_rows(c) }).collect(),
    }
}

fn pair_from_file(f: &PairPolyFile, field: &str, dim: usize) -> Result<PairPoly> {
    if f.i == 0 || f.j == 0 {
        return Err(field_err(field, "modes are numbered from 1"));
    }
    let vars = f.domain.vars();
    let mut poly = PolyMat::zero(dim, vars);
    for (k, t) in f.terms.iter().enumerate() {
        let tf = format!("{field}.terms[{}]", k + 1);
        if t.exponent.len() != vars {
            return Err(field_err(&tf, format!("exponent needs {vars} entries")));
        }
        let e = [t.exponent[0], if vars == 2 { t.exponent[1] } else { 0 }];
        let c = rows_to_matrix(&t.coeff, &tf)?;
        if c.nrows() != dim || c.ncols() != dim {
            return Err(field_err(&tf, format!("coefficient is {}x{}, expected {dim}x{dim}", c.nrows(), c.ncols())));
        }
        poly.add_term(e, c).map_err(|e| field_err(&tf, e))?;
    }
    Ok(PairPoly { i: f.i - 1, j: f.j - 1, domain: f.domain, poly })
}

impl CertificateFile {
    pub fn from_certificate(c: &DwellCertificate) -> Self {
        CertificateFile {
            query: QueryFile::from_query(&c.query),
            p: c.p.iter().map(matrix_to_rows).collect(),
            eps: c.eps,
            z: c.z.iter().map(pair_to_file).collect(),
            mu: c.mu_const.clone(),
            mu_poly: c.mu_poly.iter().map(pair_to_file).collect(),
            margin: c.margin,
        }
    }

    pub fn to_certificate(&self) -> Result<DwellCertificate> {
        let query = self.query.to_query()?;
        let mut p = Vec::new();
        for (k, rows) in self.p.iter().enumerate() {
            p.push(rows_to_matrix(rows, &format!("P[{}]", k + 1))?);
        }
        let n = p.first().map_or(0, |m| m.nrows());
        if p.is_empty() || p.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(field_err("P", "expected square matrices of a common size"));
        }
        let z = self.z.iter().enumerate().map(|(k, f)| pair_from_file(f, &format!("Z[{}]", k + 1), 3 * n)).collect::<Result<_>>()?;
        let mu_poly = self.mu_poly.iter().enumerate().map(|(k, f)| pair_from_file(f, &format!("mu_poly[{}]", k + 1), 1)).collect::<Result<_>>()?;
        Ok(DwellCertificate { query, p, eps: self.eps, z, mu_const: self.mu.clone(), mu_poly, margin: self.margin })
    }
}

pub fn certificate_to_json(c: &DwellCertificate) -> String {
    serde_json::to_string_pretty(&CertificateFile::from_certificate(c)).expect("certificate serializes")
}

pub fn parse_certificate(text: &str) -> Result<DwellCertificate> {
    let f: CertificateFile = serde_json::from_str(text).map_err(|e| parse_err("certificate file", e))?;
    f.to_certificate()
}

pub fn read_certificate(path: &Path) -> Result<DwellCertificate> {
    let text = std::fs::read_to_string(path).map_err(|e| DwellError::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_certificate(&text).map_err(|e| match e {
        DwellError::Parse(m) => DwellError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}
