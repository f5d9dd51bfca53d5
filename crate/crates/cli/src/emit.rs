//! CSV output. Floats use Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fairot_core::{FairnessReport, Lambda};

use crate::error::{CliError, Result};
use crate::methods::Method;
use crate::sweep::SweepRecord;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RELATIVE_FILE: &str = "relative.csv";

const RECORD_HEADER: &str = "seed,method,lambda,mse,w2,tv,ks,ks_grid,var_plus,var_minus";

/// Unfairness metrics with their own trade-off curve file.
pub const CURVE_METRICS: [&str; 4] = ["w2", "tv", "ks", "ks_grid"];

/// Relative-table columns.
pub const RELATIVE_METRICS: [&str; 5] = ["mse", "w2", "tv", "ks", "ks_grid"];

pub fn metric(report: &FairnessReport, name: &str) -> f64 {
    match name {
        "mse" => report.mse,
        "w2" => report.w2,
        "tv" => report.tv,
        "ks" => report.ks,
        "ks_grid" => report.ks_grid,
        "var_plus" => report.var_plus,
        "var_minus" => report.var_minus,
        _ => panic!("unknown metric {name}"),
    }
}

fn fields(r: &FairnessReport) -> [f64; 7] {
    [r.mse, r.w2, r.tv, r.ks, r.ks_grid, r.var_plus, r.var_minus]
}

pub fn lambda_label(lambda: Option<Lambda>) -> String {
    match lambda {
        Some(l) => l.to_string(),
        None => "none".to_string(),
    }
}

fn parse_lambda_label(s: &str) -> Result<Option<Lambda>> {
    if s == "none" {
        return Ok(None);
    }
    s.parse::<Lambda>()
        .map(Some)
        .map_err(|e| CliError::Usage(format!("bad lambda {s:?} in records: {e}")))
}

/// Mean and population standard deviation of each report field over the
/// seeds of one (method, lambda) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub lambda: Option<Lambda>,
    pub n: usize,
    pub mean: FairnessReport,
    pub std: FairnessReport,
}

impl Aggregate {
    pub fn mean_of(&self, name: &str) -> f64 {
        metric(&self.mean, name)
    }

    pub fn std_of(&self, name: &str) -> f64 {
        metric(&self.std, name)
    }
}

fn from_fields(v: [f64; 7]) -> FairnessReport {
    FairnessReport {
        mse: v[0],
        w2: v[1],
        tv: v[2],
        ks: v[3],
        ks_grid: v[4],
        var_plus: v[5],
        var_minus: v[6],
    }
}

/// Groups records by (method, lambda) in order of first appearance.
pub fn aggregate(records: &[SweepRecord]) -> Vec<Aggregate> {
    let mut order: Vec<(Method, Option<Lambda>)> = Vec::new();
    let mut groups: HashMap<(Method, String), Vec<[f64; 7]>> = HashMap::new();
    for r in records {
        let key = (r.method, lambda_label(r.lambda));
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            order.push((r.method, r.lambda));
        }
        entry.push(fields(&r.report));
    }
    order
        .into_iter()
        .map(|(method, lambda)| {
            let rows = &groups[&(method, lambda_label(lambda))];
            let n = rows.len() as f64;
            let mut mean = [0.0; 7];
            let mut std = [0.0; 7];
            for k in 0..7 {
                mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
                std[k] = (rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt();
            }
            Aggregate {
                method,
                lambda,
                n: rows.len(),
                mean: from_fields(mean),
                std: from_fields(std),
            }
        })
        .collect()
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn records_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{},{}", r.seed, r.method, lambda_label(r.lambda));
        for v in fields(&r.report) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == RECORD_HEADER => {}
        _ => return Err(CliError::Usage(format!("records file must start with {RECORD_HEADER:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            let bad = || CliError::Usage(format!("records line {}: cannot parse {line:?}", k + 2));
            let cells: Vec<&str> = line.trim().split(',').collect();
            if cells.len() != 10 {
                return Err(bad());
            }
            let mut v = [0.0; 7];
            for (slot, cell) in v.iter_mut().zip(&cells[3..]) {
                *slot = cell.parse().map_err(|_| bad())?;
            }
            Ok(SweepRecord {
                seed: cells[0].parse().map_err(|_| bad())?,
                method: cells[1].parse()?,
                lambda: parse_lambda_label(cells[2])?,
                report: from_fields(v),
                wall_seconds: 0.0,
            })
        })
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_records(&text)
}

pub fn summary_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from("method,lambda,n_seeds");
    for name in ["mse", "w2", "tv", "ks", "ks_grid", "var_plus", "var_minus"] {
        let _ = write!(out, ",{name}_mean,{name}_std");
    }
    out.push('\n');
    for a in aggregates {
        let _ = write!(out, "{},{},{}", a.method, lambda_label(a.lambda), a.n);
        for (m, s) in fields(&a.mean).into_iter().zip(fields(&a.std)) {
            let _ = write!(out, ",{m},{s}");
        }
        out.push('\n');
    }
    out
}

/// One trade-off curve: the metric against MSE along lambda.
pub fn curve_csv(aggregates: &[Aggregate], name: &str) -> String {
    let mut out = String::from("method,lambda,metric_mean,metric_std,mse_mean,mse_std\n");
    for a in aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            a.method,
            lambda_label(a.lambda),
            a.mean_of(name),
            a.std_of(name),
            a.mean.mse,
            a.std.mse
        );
    }
    out
}

/// Row of the relative table: means divided by the ERM means.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub method: Method,
    pub lambda: Option<Lambda>,
    pub values: [f64; 5],
}

pub fn relative_table(aggregates: &[Aggregate]) -> Option<Vec<RelativeRow>> {
    let erm = aggregates.iter().find(|a| a.method == Method::Erm)?;
    Some(
        aggregates
            .iter()
            .map(|a| {
                let mut values = [0.0; 5];
                for (v, name) in values.iter_mut().zip(RELATIVE_METRICS) {
                    *v = a.mean_of(name) / erm.mean_of(name);
                }
                RelativeRow {
                    method: a.method,
                    lambda: a.lambda,
                    values,
                }
            })
            .collect(),
    )
}

pub fn relative_csv(rows: &[RelativeRow]) -> String {
    let mut out = String::from("method,lambda,mse,w2,tv,ks,ks_grid\n");
    for r in rows {
        let _ = write!(out, "{},{}", r.method, lambda_label(r.lambda));
        for v in r.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes the records, the summary, one curve per unfairness metric and,
/// when an ERM row exists, the relative table.
pub fn emit_curves(records: &[SweepRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(CliError::Usage("no records to write".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let aggregates = aggregate(records);
    let mut written = vec![
        write_file(out_dir.join(RECORDS_FILE), &records_csv(records))?,
        write_file(out_dir.join(SUMMARY_FILE), &summary_csv(&aggregates))?,
    ];
    for name in CURVE_METRICS {
        written.push(write_file(
            out_dir.join(format!("curve_{name}.csv")),
            &curve_csv(&aggregates, name),
        )?);
    }
    if let Some(rows) = relative_table(&aggregates) {
        written.push(write_file(out_dir.join(RELATIVE_FILE), &relative_csv(&rows))?);
    }
    Ok(written)
}

/// Fixed-width text rendering of the relative table.
pub fn render_relative(rows: &[RelativeRow]) -> String {
    let mut out = format!("{:<12} {:>10}", "method", "lambda");
    for name in RELATIVE_METRICS {
        let _ = write!(out, " {name:>8}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:<12} {:>10}", r.method.as_str(), lambda_label(r.lambda));
        for v in r.values {
            let _ = write!(out, " {v:>8.3}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(v: f64) -> FairnessReport {
        FairnessReport {
            mse: v,
            w2: 2.0 * v,
            tv: 0.1,
            ks: 0.2,
            ks_grid: 0.2,
            var_plus: 1.0,
            var_minus: 1.0,
        }
    }

    fn rec(method: Method, lambda: Option<Lambda>, seed: u64, v: f64) -> SweepRecord {
        SweepRecord {
            method,
            lambda,
            seed,
            report: report(v),
            wall_seconds: 1.0,
        }
    }

    #[test]
    fn single_record_gives_single_row() {
        let records = [rec(Method::OtUnawareW2, Some(Lambda::Infinite), 0, 0.5)];
        let aggs = aggregate(&records);
        let csv = curve_csv(&aggs, "w2");
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "ot-u-w2,inf,1,0,0.5,0");
        assert!(relative_table(&aggs).is_none());
    }

    #[test]
    fn erm_is_one_in_every_relative_column() {
        let records = [
            rec(Method::Erm, None, 0, 0.2),
            rec(Method::Erm, None, 1, 0.4),
            rec(Method::OtUnawareW2, Some(Lambda::Finite(1.0)), 0, 0.3),
            rec(Method::OtUnawareW2, Some(Lambda::Finite(1.0)), 1, 0.3),
        ];
        let aggs = aggregate(&records);
        assert_eq!(aggs.len(), 2);
        assert!((aggs[0].mean.mse - 0.3).abs() < 1e-15);
        assert!((aggs[0].std.mse - 0.1).abs() < 1e-15);
        let rows = relative_table(&aggs).unwrap();
        assert_eq!(rows[0].values, [1.0; 5]);
        assert!((rows[1].values[0] - 1.0).abs() < 1e-15);
        let csv = relative_csv(&rows);
        assert_eq!(csv.lines().next().unwrap(), "method,lambda,mse,w2,tv,ks,ks_grid");
        assert!(render_relative(&rows).contains("erm"));
    }

    #[test]
    fn records_round_trip_through_csv() {
        let records = vec![
            rec(Method::Erm, None, 3, 0.123456789),
            rec(Method::PluginSoft, Some(Lambda::Finite(0.001)), 3, 1e-17),
            rec(Method::OtAwareTv, Some(Lambda::Infinite), 4, 7.0),
        ];
        let parsed = parse_records(&records_csv(&records)).unwrap();
        assert_eq!(parsed.len(), 3);
        for (a, b) in records.iter().zip(&parsed) {
            assert_eq!((a.method, a.lambda, a.seed, a.report), (b.method, b.lambda, b.seed, b.report));
        }
        assert!(parse_records("nope\n").is_err());
    }

    #[test]
    fn emits_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let records = [rec(Method::Erm, None, 0, 0.2)];
        let files = emit_curves(&records, dir.path()).unwrap();
        assert_eq!(files.len(), 7);
        assert!(emit_curves(&[], dir.path()).is_err());
    }
}
