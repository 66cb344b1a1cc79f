//! Text renderings of an [`EvalReport`]: per-fold and aggregate CSV, a
//! systems-by-alpha summary table, and whitespace-delimited plot series.

use std::fmt::Write as _;

use thiserror::Error;

use crate::eval::{format_alpha, EvalReport, SystemKind};

pub const FOLDS_HEADER: &str = "system,alpha,fold,accuracy";
pub const AGGREGATE_HEADER: &str = "system,alpha,mean,two_sigma";

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("line {line}: {msg}")]
    SchemaMismatch { line: usize, msg: String },
}

pub fn folds_csv(report: &EvalReport) -> String {
    let mut out = format!("{FOLDS_HEADER}\n");
    for r in &report.folds {
        writeln!(out, "{},{},{},{}", r.system.code(), format_alpha(r.alpha), r.fold, r.accuracy).unwrap();
    }
    out
}

pub fn aggregate_csv(report: &EvalReport) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in &report.rows {
        writeln!(out, "{},{},{:.3},{:.3}", r.system.code(), format_alpha(r.alpha), r.mean, r.two_sigma).unwrap();
    }
    out
}

/// Systems as rows (mean and 2σ lines), alphas as columns.
pub fn summary_table(report: &EvalReport) -> String {
    let mut systems: Vec<SystemKind> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    for r in &report.rows {
        if !systems.contains(&r.system) {
            systems.push(r.system);
        }
        if !alphas.iter().any(|a| a.to_bits() == r.alpha.to_bits()) {
            alphas.push(r.alpha);
        }
    }
    let mut out = String::new();
    write!(out, "{:<10}", "alpha").unwrap();
    for a in &alphas {
        write!(out, "{:>9}", format_alpha(*a)).unwrap();
    }
    out.push('\n');
    for s in systems {
        let mut mean_line = format!("{:<10}", format!("{}, mean", s.code()));
        let mut sigma_line = format!("{:<10}", format!("{}, 2σ", s.code()));
        for a in &alphas {
            match report.row(s, *a) {
                Some(r) => {
                    write!(mean_line, "{:>9.3}", r.mean).unwrap();
                    write!(sigma_line, "{:>9}", format!("± {:.3}", r.two_sigma)).unwrap();
                }
                None => {
                    write!(mean_line, "{:>9}", "n/a").unwrap();
                    write!(sigma_line, "{:>9}", "n/a").unwrap();
                }
            }
        }
        out.push_str(mean_line.trim_end());
        out.push('\n');
        out.push_str(sigma_line.trim_end());
        out.push('\n');
    }
    out
}

/// One parsed line of an aggregate CSV. `alpha` keeps its original spelling.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub system: SystemKind,
    pub alpha: String,
    pub mean: f64,
    pub two_sigma: f64,
}

pub fn parse_aggregate_csv(text: &str) -> Result<Vec<AggregateRow>, SchemaError> {
    let bad = |line: usize, msg: String| SchemaError::SchemaMismatch { line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == AGGREGATE_HEADER => {}
        Some((_, h)) => return Err(bad(1, format!("expected header `{AGGREGATE_HEADER}`, found `{h}`"))),
        None => return Err(bad(1, "missing header".into())),
    }
    let mut rows = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(line, format!("expected 4 fields, found {}", fields.len())));
        }
        let system = SystemKind::from_code(fields[0]).ok_or_else(|| bad(line, format!("unknown system `{}`", fields[0])))?;
        let num = |s: &str, what: &str| -> Result<f64, SchemaError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(line, format!("{what} `{s}` is not a number")))
        };
        num(fields[1], "alpha")?;
        let mean = num(fields[2], "mean")?;
        let two_sigma = num(fields[3], "two_sigma")?;
        rows.push(AggregateRow { system, alpha: fields[1].to_string(), mean, two_sigma });
    }
    Ok(rows)
}

/// `alpha mean lo hi` lines with `lo/hi = mean ∓ two_sigma`, three decimals.
pub fn series(rows: &[AggregateRow], system: SystemKind) -> String {
    let mut out = String::new();
    for r in rows.iter().filter(|r| r.system == system) {
        writeln!(out, "{} {:.3} {:.3} {:.3}", r.alpha, r.mean, r.mean - r.two_sigma, r.mean + r.two_sigma).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_line_from_table_value() {
        let rows = parse_aggregate_csv("system,alpha,mean,two_sigma\nP,0.0,0.972,0.004\n").unwrap();
        assert_eq!(series(&rows, SystemKind::Pairwise), "0.0 0.972 0.968 0.976\n");
        assert_eq!(series(&rows, SystemKind::Multiclass), "");
    }

    #[test]
    fn empty_body_is_fine() {
        assert_eq!(parse_aggregate_csv("system,alpha,mean,two_sigma\n").unwrap(), vec![]);
    }

    #[test]
    fn schema_errors_name_the_line() {
        let err = parse_aggregate_csv("system,alpha,mean,two_sigma\nP,0.0,0.9,0.01\nP,0.1,oops,0.0\n").unwrap_err();
        assert!(matches!(err, SchemaError::SchemaMismatch { line: 3, .. }), "{err:?}");
        let err = parse_aggregate_csv("system,alpha,mean\n").unwrap_err();
        assert!(matches!(err, SchemaError::SchemaMismatch { line: 1, .. }));
        let err = parse_aggregate_csv("system,alpha,mean,two_sigma\nQ,0.0,0.9,0.01\n").unwrap_err();
        assert!(matches!(err, SchemaError::SchemaMismatch { line: 2, .. }));
        let err = parse_aggregate_csv("system,alpha,mean,two_sigma\nP,0.0,0.9\n").unwrap_err();
        assert!(matches!(err, SchemaError::SchemaMismatch { line: 2, .. }));
    }
}
