//! Error tables and their CSV form.
//!
//! ```text
//! scheme,problem,n,p,error,stderr,reps,seed
//! milstein,circle2d,32,2,0.0123,0.0004,20000,42
//! ...
//! #rate,2,0.81,0.998
//! ```
//!
//! Diagnostics, when present, follow as `#occupation,n,eps,mean,stderr` and
//! `#crossing,n,mean,stderr` lines.

use std::fmt::Write as _;

use super::stats::{fit_log2_rate, RateFit};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scheme,problem,n,p,error,stderr,reps,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub p: f64,
    pub error: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagnosticKind {
    Occupation { eps_tilde: f64 },
    Crossing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub n: usize,
    pub kind: DiagnosticKind,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub scheme: String,
    pub problem: String,
    /// Repetitions that entered the estimates.
    pub reps: usize,
    pub seed: u64,
    pub aborted: usize,
    pub rows: Vec<ErrorRow>,
    pub rates: Vec<RateFit>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ErrorTable {
    /// Rows for one `p`, in table order.
    pub fn rows_for(&self, p: f64) -> impl Iterator<Item = &ErrorRow> {
        self.rows.iter().filter(move |r| r.p == p)
    }

    pub fn error(&self, n: usize, p: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.n == n && r.p == p)
    }

    pub fn rate(&self, p: f64) -> Option<&RateFit> {
        self.rates.iter().find(|r| r.p == p)
    }

    pub fn p_values(&self) -> Vec<f64> {
        let mut ps: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !ps.contains(&r.p) {
                ps.push(r.p);
            }
        }
        ps
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.scheme, self.problem, r.n, r.p, r.error, r.stderr, self.reps, self.seed
            );
        }
        for r in &self.rates {
            let _ = writeln!(out, "#rate,{},{},{}", r.p, r.rate, r.r_squared);
        }
        for d in &self.diagnostics {
            let _ = match d.kind {
                DiagnosticKind::Occupation { eps_tilde } => {
                    writeln!(out, "#occupation,{},{},{},{}", d.n, eps_tilde, d.mean, d.stderr)
                }
                DiagnosticKind::Crossing => writeln!(out, "#crossing,{},{},{}", d.n, d.mean, d.stderr),
            };
        }
        out
    }
}

/// Least-squares rate for one `p` of `table`.
pub fn fit_rate(table: &ErrorTable, p: f64) -> Result<RateFit> {
    let (ns, errors): (Vec<usize>, Vec<f64>) = table.rows_for(p).map(|r| (r.n, r.error)).unzip();
    fit_log2_rate(&ns, &errors, p)
}

/// One data row of an error CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scheme: String,
    pub problem: String,
    pub n: usize,
    pub p: f64,
    pub error: f64,
    pub stderr: f64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCsv {
    pub rows: Vec<CsvRow>,
    /// `(p, rate, r2)` from `#rate` lines.
    pub rates: Vec<(f64, f64, f64)>,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let mut parsed = ParsedCsv::default();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        _ => return Err(Error::Config(format!("CSV must start with '{CSV_HEADER}'"))),
    }
    let bad = |lineno: usize| Error::Config(format!("CSV line {}: malformed", lineno + 1));
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if let Some(tag) = fields[0].strip_prefix('#') {
            if tag == "rate" {
                if fields.len() != 4 {
                    return Err(bad(lineno));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(lineno));
                parsed.rates.push((num(fields[1])?, num(fields[2])?, num(fields[3])?));
            }
            continue;
        }
        if fields.len() != 8 {
            return Err(bad(lineno));
        }
        let row = (|| -> std::result::Result<CsvRow, ()> {
            Ok(CsvRow {
                scheme: fields[0].to_string(),
                problem: fields[1].to_string(),
                n: fields[2].parse().map_err(drop)?,
                p: fields[3].parse().map_err(drop)?,
                error: fields[4].parse().map_err(drop)?,
                stderr: fields[5].parse().map_err(drop)?,
                reps: fields[6].parse().map_err(drop)?,
                seed: fields[7].parse().map_err(drop)?,
            })
        })()
        .map_err(|_| bad(lineno))?;
        parsed.rows.push(row);
    }
    Ok(parsed)
}
