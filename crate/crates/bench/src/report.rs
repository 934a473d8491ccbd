//! CSV files written by the harness.
//!
//! Per-trial traces, `{alg}_trial{k}.csv`:
//! `iter,time_s,objective,rel_rmse,dist_to_final,grad_norm`.
//! Aggregates, `{alg}_aggregate.csv`: the same columns after `iter,trials`,
//! each the arithmetic mean over the trials that reached that iteration.
//! Floats are written in shortest round-trip form, switching to exponent
//! notation outside `[1e-4, 1e15)`; a missing value is an empty field.

use std::fs::File;
use std::path::Path;

use risro_core::SolveTrace;

use crate::error::{BenchError, Result};

pub const TRACE_HEADER: [&str; 6] = ["iter", "time_s", "objective", "rel_rmse", "dist_to_final", "grad_norm"];
pub const AGGREGATE_HEADER: [&str; 7] = ["iter", "trials", "time_s", "objective", "rel_rmse", "dist_to_final", "grad_norm"];
pub const SUCCESS_HEADER: [&str; 5] = ["n", "algorithm", "trials", "successes", "fraction"];
pub const RIP_HEADER: [&str; 6] = ["trial", "n", "rank", "samples", "lower", "upper"];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub time_s: f64,
    pub objective: f64,
    pub rel_rmse: Option<f64>,
    pub dist_to_final: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iter: usize,
    pub trials: usize,
    pub time_s: f64,
    pub objective: f64,
    pub rel_rmse: Option<f64>,
    pub dist_to_final: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessRow {
    pub n: usize,
    pub algorithm: String,
    pub trials: usize,
    pub successes: usize,
}

impl SuccessRow {
    pub fn fraction(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RipRow {
    pub trial: usize,
    pub n: usize,
    pub rank: usize,
    pub samples: usize,
    pub lower: f64,
    pub upper: f64,
}

pub fn trace_rows(trace: &SolveTrace, fixed_clock: bool) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            iter: r.iter,
            time_s: if fixed_clock { 0.0 } else { r.wall_time_s },
            objective: r.objective,
            rel_rmse: r.rel_rmse,
            dist_to_final: r.dist_to_final,
            grad_norm: r.grad_norm,
        })
        .collect()
}

/// Shortest decimal that parses back to `x` exactly.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Row `k` averages row `k` of every trace that has one.
pub fn aggregate(traces: &[Vec<TraceRow>]) -> Vec<AggregateRow> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let rows: Vec<&TraceRow> = traces.iter().filter_map(|t| t.get(k)).collect();
            AggregateRow {
                iter: k,
                trials: rows.len(),
                time_s: mean(rows.iter().map(|r| r.time_s)).unwrap_or(f64::NAN),
                objective: mean(rows.iter().map(|r| r.objective)).unwrap_or(f64::NAN),
                rel_rmse: mean(rows.iter().filter_map(|r| r.rel_rmse)),
                dist_to_final: mean(rows.iter().filter_map(|r| r.dist_to_final)),
                grad_norm: mean(rows.iter().map(|r| r.grad_norm)).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_all<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let io = |e: csv::Error| BenchError::io(path, e.into());
    let mut w = writer(path)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_all(
        path,
        TRACE_HEADER,
        rows.iter().map(|r| {
            [
                r.iter.to_string(),
                fmt_f64(r.time_s),
                fmt_f64(r.objective),
                opt(r.rel_rmse),
                opt(r.dist_to_final),
                fmt_f64(r.grad_norm),
            ]
        }),
    )
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_all(
        path,
        AGGREGATE_HEADER,
        rows.iter().map(|r| {
            [
                r.iter.to_string(),
                r.trials.to_string(),
                fmt_f64(r.time_s),
                fmt_f64(r.objective),
                opt(r.rel_rmse),
                opt(r.dist_to_final),
                fmt_f64(r.grad_norm),
            ]
        }),
    )
}

pub fn write_success_csv(path: &Path, rows: &[SuccessRow]) -> Result<()> {
    write_all(
        path,
        SUCCESS_HEADER,
        rows.iter().map(|r| {
            [r.n.to_string(), r.algorithm.clone(), r.trials.to_string(), r.successes.to_string(), fmt_f64(r.fraction())]
        }),
    )
}

pub fn write_rip_csv(path: &Path, rows: &[RipRow]) -> Result<()> {
    write_all(
        path,
        RIP_HEADER,
        rows.iter().map(|r| {
            [
                r.trial.to_string(),
                r.n.to_string(),
                r.rank.to_string(),
                r.samples.to_string(),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
            ]
        }),
    )
}

/// A numeric CSV: header names and one `Option<f64>` per cell, empty cells
/// and non-numeric columns read as `None`.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let data = |line: u64, msg: String| BenchError::Data(format!("{}:{line}: {msg}", path.display()));
    let header: Vec<String> = rdr.headers().map_err(|e| data(1, e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| data(line, e.to_string()))?;
        let row = rec.iter().map(|cell| if cell.is_empty() { None } else { cell.parse::<f64>().ok() }).collect();
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Reads a per-trial trace back, checking the schema.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let table = read_table(path)?;
    if table.header != TRACE_HEADER {
        return Err(BenchError::Data(format!("{}:1: unexpected header {:?}", path.display(), table.header)));
    }
    table
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let need = |j: usize| {
                row[j].ok_or_else(|| {
                    BenchError::Data(format!("{}:{}: field `{}` is not a number", path.display(), k + 2, TRACE_HEADER[j]))
                })
            };
            Ok(TraceRow {
                iter: need(0)? as usize,
                time_s: need(1)?,
                objective: need(2)?,
                rel_rmse: row[3],
                dist_to_final: row[4],
                grad_norm: need(5)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: usize, e: Option<f64>) -> TraceRow {
        TraceRow { iter, time_s: 0.5, objective: 2.0 + iter as f64, rel_rmse: e, dist_to_final: None, grad_norm: 1.0 }
    }

    #[test]
    fn aggregate_averages_available_rows() {
        let a = vec![row(0, Some(1.0)), row(1, Some(0.1))];
        let b = vec![row(0, Some(3.0)), row(1, None), row(2, Some(0.01))];
        let agg = aggregate(&[a, b]);
        assert_eq!(agg.len(), 3);
        assert_eq!(agg[0].rel_rmse, Some(2.0));
        assert_eq!(agg[1].trials, 2);
        assert_eq!(agg[1].rel_rmse, Some(0.1));
        assert_eq!(agg[2].trials, 1);
        assert_eq!(agg[0].dist_to_final, None);
    }

    #[test]
    fn trace_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![row(0, Some(0.1 + 0.2)), row(1, None)];
        write_trace_csv(&path, &rows).unwrap();
        assert_eq!(read_trace_csv(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iter,time_s,objective,rel_rmse,dist_to_final,grad_norm\n"));
        assert!(text.contains("1,0.5,3,,,1\n"));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, -0.0, 3.0, 0.1 + 0.2, 1e-300, -2.5e-7, 6.02e23, f64::MIN_POSITIVE, 1e-4, 123456.789] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(1.5e-15), "1.5e-15");
        assert_eq!(fmt_f64(0.25), "0.25");
    }

    #[test]
    fn bad_trace_reports_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "iter,time_s,objective,rel_rmse,dist_to_final,grad_norm\n0,0,x,,,1\n").unwrap();
        let err = read_trace_csv(&path).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("objective"), "{err}");
    }
}
