//! JSON-lines run records and the mean / sd summary table.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies one experimental condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub problem: String,
    pub n_train: usize,
    pub scheme: String,
    pub model: String,
    pub filtered: bool,
}

/// Test-set metrics; absent values do not apply to the cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_d_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dk_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_loss: Option<f64>,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] = ["d_hat", "log_d_hat", "dk_hat", "rmae", "val_loss"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "d_hat" => self.d_hat,
            "log_d_hat" => self.log_d_hat,
            "dk_hat" => self.dk_hat,
            "rmae" => self.rmae,
            "val_loss" => self.val_loss,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    #[serde(flatten)]
    pub cell: Cell,
    pub replicate: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta_star: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

impl Record {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Schema(format!("record line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// One metric of one cell aggregated over replicates. `sd` is the
/// population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: Cell,
    pub metric: String,
    pub n: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    Some((m, var.sqrt()))
}

/// Aggregates records per cell and metric, sorted by cell then metric name
/// order. Cells whose replicates all failed get a single row with no
/// statistics.
pub fn summarize(records: &[Record]) -> Result<Vec<SummaryRow>> {
    if !records.iter().any(Record::is_ok) {
        return Err(Error::Empty("no successful records to summarize".into()));
    }
    let mut cells: BTreeMap<&Cell, Vec<&Record>> = BTreeMap::new();
    for r in records {
        cells.entry(&r.cell).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (cell, recs) in cells {
        let failed = recs.iter().filter(|r| !r.is_ok()).count();
        let ok: Vec<_> = recs.iter().filter(|r| r.is_ok()).collect();
        if ok.is_empty() {
            rows.push(SummaryRow {
                cell: cell.clone(),
                metric: "failed".into(),
                n: 0,
                failed,
                mean: None,
                sd: None,
            });
            continue;
        }
        for name in Metrics::NAMES {
            let vals: Vec<f64> = ok.iter().filter_map(|r| r.metrics.get(name)).collect();
            if let Some((m, sd)) = mean_sd(&vals) {
                rows.push(SummaryRow {
                    cell: cell.clone(),
                    metric: name.into(),
                    n: vals.len(),
                    failed,
                    mean: Some(m),
                    sd: Some(sd),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["problem", "n_train", "scheme", "model", "filtered", "metric", "n", "failed", "mean", "sd"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.cell.problem.clone(),
            r.cell.n_train.to_string(),
            r.cell.scheme.clone(),
            r.cell.model.clone(),
            r.cell.filtered.to_string(),
            r.metric.clone(),
            r.n.to_string(),
            r.failed.to_string(),
            fmt(r.mean),
            fmt(r.sd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Looks up one summary statistic.
pub fn find<'a>(rows: &'a [SummaryRow], scheme: &str, model: &str, filtered: bool, metric: &str) -> Option<&'a SummaryRow> {
    rows.iter()
        .find(|r| r.cell.scheme == scheme && r.cell.model == model && r.cell.filtered == filtered && r.metric == metric)
}
