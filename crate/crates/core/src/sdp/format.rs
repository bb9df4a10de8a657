//! Plain-text triplet interchange format for [`SdpProblem`].
//!
//! ```text
//! lpvdt-sdp 1
//! vars <N>
//! v <index> <name...>
//! objective <K>
//! o <var> <coef>
//! constraints <M>
//! c <index> <dim> <nd|psd> <margin> <tag...>
//! k <row> <col> <value>           constant entry, row ≥ col
//! a <var> <row> <col> <value>     coefficient of unknown <var>, row ≥ col
//! end
//! ```
//!
//! Entries are lower-triangular and unscaled; the off-diagonal entry `(i, j)`
//! stands for both `(i, j)` and `(j, i)`. Numbers use Rust's shortest
//! round-trip float formatting, so write→parse reproduces every bit. Names
//! and tags run to the end of the line. Lines starting with `#` are ignored.

use super::{LmiConstraint, SdpProblem, Sense, SymEntry, VarId};
use crate::error::{Error, Result};

const MAGIC: &str = "lpvdt-sdp 1";

pub fn write_problem(p: &SdpProblem) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "vars {}", p.variables.len());
    for (i, name) in p.variables.iter().enumerate() {
        let _ = writeln!(s, "v {i} {}", name.replace('\n', " "));
    }
    let _ = writeln!(s, "objective {}", p.objective.len());
    for (v, c) in &p.objective {
        let _ = writeln!(s, "o {} {c:?}", v.0);
    }
    let _ = writeln!(s, "constraints {}", p.constraints.len());
    for (idx, c) in p.constraints.iter().enumerate() {
        let sense = match c.sense {
            Sense::NegativeDefinite => "nd",
            Sense::PositiveSemidefinite => "psd",
        };
        let _ = writeln!(s, "c {idx} {} {sense} {:?} {}", c.dim, c.margin, c.tag.replace('\n', " "));
        for (i, j, v) in &c.constant {
            let _ = writeln!(s, "k {i} {j} {v:?}");
        }
        for (var, entries) in &c.coefficients {
            for (i, j, v) in entries {
                let _ = writeln!(s, "a {} {i} {j} {v:?}", var.0);
            }
        }
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((_, l)) if l.trim().is_empty() || l.starts_with('#') => continue,
                Some((n, l)) => return Ok((n + 1, l)),
                None => return Err(Error::Config("unexpected end of SDP file".into())),
            }
        }
    }

    fn peek_kind(&mut self) -> Option<&'a str> {
        while let Some((_, l)) = self.inner.peek() {
            if l.trim().is_empty() || l.starts_with('#') {
                self.inner.next();
                continue;
            }
            return l.split_whitespace().next();
        }
        None
    }
}

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("SDP file line {line}: {msg}"))
}

fn field<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| err(line, format!("bad {what}")))
}

/// Split off `count` whitespace-separated tokens and return them with the rest
/// of the line (leading space trimmed once).
fn split_fields(l: &str, count: usize) -> (Vec<&str>, &str) {
    let mut toks = Vec::with_capacity(count);
    let mut rest = l;
    for _ in 0..count {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        toks.push(&rest[..end]);
        rest = &rest[end..];
    }
    (toks, rest.strip_prefix(' ').unwrap_or(rest))
}

fn header(lines: &mut Lines, key: &str) -> Result<usize> {
    let (n, l) = lines.next()?;
    let mut it = l.split_whitespace();
    if it.next() != Some(key) {
        return Err(err(n, format!("expected '{key}'")));
    }
    field(n, it.next(), "count")
}

pub fn parse_problem(text: &str) -> Result<SdpProblem> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (n, first) = lines.next()?;
    if first.trim() != MAGIC {
        return Err(err(n, "missing 'lpvdt-sdp 1' header"));
    }
    let nvars = header(&mut lines, "vars")?;
    let mut variables = Vec::with_capacity(nvars);
    for k in 0..nvars {
        let (n, l) = lines.next()?;
        let (toks, name) = split_fields(l, 2);
        if toks[0] != "v" || toks[1].parse::<usize>().ok() != Some(k) {
            return Err(err(n, format!("expected variable {k}")));
        }
        variables.push(name.to_string());
    }
    let nobj = header(&mut lines, "objective")?;
    let mut objective = Vec::with_capacity(nobj);
    for _ in 0..nobj {
        let (n, l) = lines.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some("o") {
            return Err(err(n, "expected objective entry"));
        }
        let v: usize = field(n, it.next(), "variable")?;
        let c: f64 = field(n, it.next(), "coefficient")?;
        objective.push((VarId(v), c));
    }
    let ncons = header(&mut lines, "constraints")?;
    let mut constraints = Vec::with_capacity(ncons);
    for k in 0..ncons {
        let (n, l) = lines.next()?;
        let (toks, tag) = split_fields(l, 5);
        if toks[0] != "c" || toks[1].parse::<usize>().ok() != Some(k) {
            return Err(err(n, format!("expected constraint {k}")));
        }
        let dim: usize = field(n, Some(toks[2]), "dimension")?;
        let sense = match toks[3] {
            "nd" => Sense::NegativeDefinite,
            "psd" => Sense::PositiveSemidefinite,
            other => return Err(err(n, format!("unknown sense '{other}'"))),
        };
        let margin: f64 = field(n, Some(toks[4]), "margin")?;
        let mut constant: Vec<SymEntry> = Vec::new();
        let mut coefficients: Vec<(VarId, Vec<SymEntry>)> = Vec::new();
        while let Some(kind) = lines.peek_kind() {
            if kind != "k" && kind != "a" {
                break;
            }
            let (n, l) = lines.next()?;
            let mut it = l.split_whitespace().skip(1);
            if kind == "k" {
                let i = field(n, it.next(), "row")?;
                let j = field(n, it.next(), "col")?;
                constant.push((i, j, field(n, it.next(), "value")?));
            } else {
                let v = VarId(field(n, it.next(), "variable")?);
                let i = field(n, it.next(), "row")?;
                let j = field(n, it.next(), "col")?;
                let val = field(n, it.next(), "value")?;
                match coefficients.last_mut() {
                    Some((last, es)) if *last == v => es.push((i, j, val)),
                    _ => coefficients.push((v, vec![(i, j, val)])),
                }
            }
        }
        constraints.push(LmiConstraint {
            dim,
            constant,
            coefficients,
            sense,
            margin,
            tag: tag.to_string(),
        });
    }
    let (n, l) = lines.next()?;
    if l.trim() != "end" {
        return Err(err(n, "expected 'end'"));
    }
    let p = SdpProblem {
        variables,
        constraints,
        objective,
    };
    p.validate()?;
    Ok(p)
}
