//! On-disk artifacts: `values.csv`, `metrics.csv`, `selection_history.jsonl`,
//! `detection.json`, `removal.csv` and the long-format plot tables.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the in-memory values exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{DetectionReport, RemovalCurve, RemovalOrder};
use crate::selection::{EpochMetrics, SelectionEvent};
use crate::shapley::rank_descending;

/// One row of `values.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub index: usize,
    pub label: usize,
    pub is_noisy: Option<bool>,
    pub mean_value: f64,
    /// 1 = most valuable; ties rank the lower index first.
    pub rank: usize,
}

pub fn value_rows(
    values: &[f64],
    labels: &[usize],
    noisy: Option<&[bool]>,
) -> Result<Vec<ValueRow>> {
    if labels.len() != values.len() || noisy.is_some_and(|m| m.len() != values.len()) {
        return Err(Error::Input(
            "values, labels and noise mask differ in length".into(),
        ));
    }
    let ranks = rank_descending(values);
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &v)| ValueRow {
            index: i,
            label: labels[i],
            is_noisy: noisy.map(|m| m[i]),
            mean_value: v,
            rank: ranks[i],
        })
        .collect())
}

pub fn write_values_csv<W: Write>(w: W, rows: &[ValueRow]) -> Result<()> {
    let with_noise = rows.first().is_some_and(|r| r.is_noisy.is_some());
    let mut out = csv::Writer::from_writer(w);
    if with_noise {
        out.write_record(["index", "label", "is_noisy", "mean_value", "rank"])?;
    } else {
        out.write_record(["index", "label", "mean_value", "rank"])?;
    }
    for r in rows {
        let mut rec = vec![r.index.to_string(), r.label.to_string()];
        if with_noise {
            rec.push((r.is_noisy.unwrap_or(false) as u8).to_string());
        }
        rec.push(r.mean_value.to_string());
        rec.push(r.rank.to_string());
        out.write_record(&rec)?;
    }
    out.flush()
        .map_err(|e| Error::Input(format!("values.csv: {e}")))?;
    Ok(())
}

pub fn read_values_csv<R: std::io::Read>(r: R) -> Result<Vec<ValueRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    let with_noise = header.iter().any(|h| h == "is_noisy");
    let bad = |what: &str, v: &str| Error::Input(format!("values.csv: bad {what} {v:?}"));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let mut k = 0;
        let mut next = || {
            k += 1;
            k - 1
        };
        let index = get(next()).parse().map_err(|_| bad("index", get(0)))?;
        let label = get(next()).parse().map_err(|_| bad("label", get(1)))?;
        let is_noisy = if with_noise {
            let f = next();
            Some(match get(f) {
                "1" => true,
                "0" => false,
                v => return Err(bad("is_noisy", v)),
            })
        } else {
            None
        };
        let f = next();
        let mean_value = get(f).parse().map_err(|_| bad("mean_value", get(f)))?;
        let f = next();
        let rank = get(f).parse().map_err(|_| bad("rank", get(f)))?;
        rows.push(ValueRow {
            index,
            label,
            is_noisy,
            mean_value,
            rank,
        });
    }
    Ok(rows)
}

pub fn write_metrics_csv<W: Write>(w: W, metrics: &[EpochMetrics]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for m in metrics {
        out.serialize(m)?;
    }
    out.flush()
        .map_err(|e| Error::Input(format!("metrics.csv: {e}")))?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(r: R) -> Result<Vec<EpochMetrics>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// One line of `selection_history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub per_class: Vec<Vec<usize>>,
    pub weights: WeightSummary,
}

impl From<&SelectionEvent> for HistoryRecord {
    fn from(e: &SelectionEvent) -> Self {
        HistoryRecord {
            epoch: e.epoch,
            per_class: e.per_class.clone(),
            weights: WeightSummary {
                count: e.weights.len(),
                min: e.weight_min,
                max: e.weight_max,
                mean: e.weight_mean,
            },
        }
    }
}

pub fn write_history_jsonl<W: Write>(mut w: W, events: &[SelectionEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, &HistoryRecord::from(e))?;
        w.write_all(b"\n")
            .map_err(|e| Error::Input(format!("history: {e}")))?;
    }
    Ok(())
}

pub fn read_history_jsonl<R: BufRead>(r: R) -> Result<Vec<HistoryRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::Input(format!("history: {e}")))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_detection_json<W: Write>(w: W, report: &DetectionReport) -> Result<()> {
    serde_json::to_writer_pretty(w, report)?;
    Ok(())
}

/// `removal.csv`: `order,fraction,accuracy` with an empty accuracy for
/// skipped points.
pub fn write_removal_csv<W: Write>(w: W, curve: &RemovalCurve) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["order", "fraction", "accuracy"])?;
    for order in RemovalOrder::ALL {
        for (f, acc) in curve.removal_fractions.iter().zip(curve.series(order)) {
            out.write_record([
                order.as_str().to_string(),
                f.to_string(),
                acc.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    out.flush()
        .map_err(|e| Error::Input(format!("removal.csv: {e}")))?;
    Ok(())
}

pub fn read_removal_csv<R: std::io::Read>(r: R) -> Result<RemovalCurve> {
    let mut curve = RemovalCurve {
        removal_fractions: Vec::new(),
        lowest_first: Vec::new(),
        highest_first: Vec::new(),
        random: Vec::new(),
    };
    for rec in csv::Reader::from_reader(r).records() {
        let rec = rec?;
        let bad = || Error::Input(format!("removal.csv: bad record {rec:?}"));
        let f: f64 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let acc = match rec.get(2).ok_or_else(bad)? {
            "" => None,
            v => Some(v.parse::<f64>().map_err(|_| bad())?),
        };
        let series = match rec.get(0).ok_or_else(bad)? {
            "lowest-first" => {
                curve.removal_fractions.push(f);
                &mut curve.lowest_first
            }
            "highest-first" => &mut curve.highest_first,
            "random" => &mut curve.random,
            _ => return Err(bad()),
        };
        series.push(acc);
    }
    Ok(curve)
}

/// Tidy `series,x,y` rows for external plotting.
pub fn write_long_csv<W: Write>(w: W, rows: &[(String, f64, f64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["series", "x", "y"])?;
    for (s, x, y) in rows {
        out.write_record([s.clone(), x.to_string(), y.to_string()])?;
    }
    out.flush()
        .map_err(|e| Error::Input(format!("plot data: {e}")))?;
    Ok(())
}

/// Create `path` and hand a buffered writer to `f`.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
