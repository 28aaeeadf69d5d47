//! SDPA sparse format (`.dat-s`).
//!
//! SDPA states its constraint as `Σ_k x_k F_k − F_0 ⪰ 0`, so the constant
//! term of a block is written negated.

use super::{LmiBlock, LmiProblem, SymSparse};
use crate::error::{invalid, DwellError, Result};
use std::fmt::Write as _;

/// Writes a problem without equalities. With `epigraph`, an extra variable
/// `t` (last) is appended with `F_t = −I` on every block, a 1×1 block
/// `1 − t ⪰ 0`, and objective `min −t`.
pub fn export_sdpa(p: &LmiProblem, epigraph: bool) -> Result<String> {
    p.validate()?;
    if !p.equalities.is_empty() {
        return invalid("SDPA export requires equalities to be eliminated first");
    }
    let m = p.num_vars + usize::from(epigraph);
    let mut sizes: Vec<usize> = p.blocks.iter().map(|b| b.size).collect();
    if epigraph {
        sizes.push(1);
    }
    let mut out = String::new();
    let _ = writeln!(out, "{m}");
    let _ = writeln!(out, "{}", sizes.len());
    let _ = writeln!(out, "{}", sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "));
    let objective: Vec<String> = (0..m).map(|k| fmt(if epigraph && k == m - 1 { -1.0 } else { 0.0 })).collect();
    let _ = writeln!(out, "{}", objective.join(" "));
    let mut lines: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (b, blk) in p.blocks.iter().enumerate() {
        let mut blk = blk.clone();
        blk.compress();
        for &(i, j, v) in &blk.constant.entries {
            lines.push((0, b + 1, i + 1, j + 1, -v));
        }
        for (k, f) in &blk.terms {
            for &(i, j, v) in &f.entries {
                lines.push((k + 1, b + 1, i + 1, j + 1, v));
            }
        }
        if epigraph {
            for i in 0..blk.size {
                lines.push((m, b + 1, i + 1, i + 1, -1.0));
            }
        }
    }
    if epigraph {
        let b = p.blocks.len() + 1;
        lines.push((0, b, 1, 1, -1.0));
        lines.push((m, b, 1, 1, -1.0));
    }
    lines.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (k, b, i, j, v) in lines {
        let _ = writeln!(out, "{k} {b} {i} {j} {}", fmt(v));
    }
    Ok(out)
}

/// Shortest decimal that round-trips to the same `f64`.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone)]
pub struct SdpaProblem {
    /// Blocks in this crate's convention (`F₀ + Σ y_k F_k ⪰ 0`).
    pub problem: LmiProblem,
    pub objective: Vec<f64>,
}

pub fn parse_sdpa(text: &str) -> Result<SdpaProblem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let mut header = |what: &str| -> Result<(usize, Vec<String>)> {
        let (n, l) = lines.next().ok_or_else(|| DwellError::Parse(format!("missing {what} line")))?;
        let cleaned: String = l.chars().map(|c| if "{}(),".contains(c) { ' ' } else { c }).collect();
        Ok((n, cleaned.split_whitespace().map(str::to_string).collect()))
    };
    let (n, m_tok) = header("m")?;
    let m: usize = parse_tok(m_tok.first(), n)?;
    let (n, nb_tok) = header("nblocks")?;
    let nblocks: usize = parse_tok(nb_tok.first(), n)?;
    let (n, size_tok) = header("block sizes")?;
    if size_tok.len() < nblocks {
        return Err(DwellError::Parse(format!("line {n}: expected {nblocks} block sizes")));
    }
    let mut sizes = Vec::with_capacity(nblocks);
    for t in &size_tok[..nblocks] {
        let s: i64 = t.parse().map_err(|_| DwellError::Parse(format!("line {n}: bad block size '{t}'")))?;
        sizes.push(s.unsigned_abs() as usize);
    }
    let (n, obj_tok) = header("objective")?;
    if obj_tok.len() < m {
        return Err(DwellError::Parse(format!("line {n}: expected {m} objective entries")));
    }
    let objective = obj_tok[..m]
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| DwellError::Parse(format!("line {n}: bad number '{t}'"))))
        .collect::<Result<Vec<f64>>>()?;
    let mut blocks: Vec<LmiBlock> = sizes.iter().enumerate().map(|(b, &s)| LmiBlock::new(s, format!("block {}", b + 1))).collect();
    let mut term_maps: Vec<std::collections::BTreeMap<usize, SymSparse>> = vec![Default::default(); nblocks];
    for (n, l) in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() < 5 {
            return Err(DwellError::Parse(format!("line {n}: expected 'k b i j v'")));
        }
        let k: usize = parse_tok(Some(&tok[0].to_string()), n)?;
        let b: usize = parse_tok(Some(&tok[1].to_string()), n)?;
        let i: usize = parse_tok(Some(&tok[2].to_string()), n)?;
        let j: usize = parse_tok(Some(&tok[3].to_string()), n)?;
        let v: f64 = tok[4].parse().map_err(|_| DwellError::Parse(format!("line {n}: bad value '{}'", tok[4])))?;
        if k > m || b == 0 || b > nblocks || i == 0 || j == 0 || i > sizes[b - 1] || j > sizes[b - 1] {
            return Err(DwellError::Parse(format!("line {n}: index out of range")));
        }
        if k == 0 {
            blocks[b - 1].constant.push(i - 1, j - 1, -v);
        } else {
            term_maps[b - 1].entry(k - 1).or_default().push(i - 1, j - 1, v);
        }
    }
    for (blk, terms) in blocks.iter_mut().zip(term_maps) {
        blk.terms = terms.into_iter().collect();
        blk.compress();
    }
    Ok(SdpaProblem { problem: LmiProblem { num_vars: m, blocks, equalities: Vec::new(), variable_names: Vec::new() }, objective })
}

fn parse_tok(t: Option<&String>, line: usize) -> Result<usize> {
    t.and_then(|s| s.parse().ok()).ok_or_else(|| DwellError::Parse(format!("line {line}: expected a non-negative integer")))
}

#[cfg(test)]
mod tests {
    use super::super::tests::scalar_block;
    use super::*;

    #[test]
    fn trivial_problem_file() {
        let p = LmiProblem { num_vars: 1, blocks: vec![scalar_block(-1.0, &[(0, 1.0)])], equalities: vec![], variable_names: vec![] };
        let s = export_sdpa(&p, false).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(&lines[..4], &["1", "1", "1", "0.0"]);
        assert!(lines.contains(&"1 1 1 1 1.0"));
        assert!(lines.contains(&"0 1 1 1 1.0"));
    }

    #[test]
    fn empty_problem_header_only() {
        let s = export_sdpa(&LmiProblem::default(), false).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("0\n0\n"));
    }

    #[test]
    fn round_trip() {
        let mut b = LmiBlock::new(2, "");
        b.constant.push(0, 1, 0.25);
        b.constant.push(1, 1, -1.0 / 3.0);
        let mut f = SymSparse::new();
        f.push(0, 0, 1.0);
        f.push(1, 0, 2e-7);
        b.terms.push((1, f));
        let p = LmiProblem { num_vars: 2, blocks: vec![b, scalar_block(0.5, &[(0, 1.0)])], equalities: vec![], variable_names: vec![] };
        let parsed = parse_sdpa(&export_sdpa(&p, false).unwrap()).unwrap();
        let y = [0.3, -0.7];
        for (a, b) in p.blocks.iter().zip(&parsed.problem.blocks) {
            assert_eq!(a.eval(&y), b.eval(&y));
        }
        let epi = parse_sdpa(&export_sdpa(&p, true).unwrap()).unwrap();
        assert_eq!(epi.problem.num_vars, 3);
        assert_eq!(epi.objective, vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn rejects_equalities_and_garbage() {
        let p = LmiProblem {
            num_vars: 1,
            blocks: vec![],
            equalities: vec![super::super::LinearEquality { coeffs: vec![(0, 1.0)], rhs: 0.0 }],
            variable_names: vec![],
        };
        assert!(export_sdpa(&p, false).is_err());
        assert!(parse_sdpa("1\n1\n1\n0\n1 2 1 1 1.0\n").is_err());
        assert!(parse_sdpa("x\n").is_err());
    }
}
