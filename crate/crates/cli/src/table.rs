//! Results aggregation: raw per-run rows plus mean/std/min/max/range
//! summary rows, exported as CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use multisol_core::train::TrainReport;

pub const METRIC_COLUMNS: [&str; 5] = [
    "top1_accuracy",
    "macro_f1",
    "macro_precision",
    "macro_recall",
    "convergence_epoch",
];

/// One trained model's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Loss selector label, e.g. `multisol_f1` or `cross_entropy`.
    pub loss: String,
    /// Sweep axis value when applicable (alpha or lambda).
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub top1_accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub convergence_epoch: usize,
}

impl ResultRow {
    pub fn from_report(loss: String, sweep_value: Option<f64>, seed: u64, r: &TrainReport) -> Self {
        Self {
            loss,
            sweep_value,
            seed,
            top1_accuracy: r.test.top1_accuracy,
            macro_f1: r.test.macro_f1,
            macro_precision: r.test.macro_precision,
            macro_recall: r.test.macro_recall,
            convergence_epoch: r.convergence_epoch,
        }
    }

    fn metrics(&self) -> [f64; 5] {
        [
            self.top1_accuracy,
            self.macro_f1,
            self.macro_precision,
            self.macro_recall,
            self.convergence_epoch as f64,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub loss: String,
    pub sweep_value: Option<f64>,
    pub statistic: &'static str,
    pub values: [f64; 5],
}

impl ResultsTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    /// Sorts raw rows deterministically: by loss label, sweep value, seed.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.loss
                .cmp(&b.loss)
                .then(
                    a.sweep_value
                        .unwrap_or(f64::NEG_INFINITY)
                        .total_cmp(&b.sweep_value.unwrap_or(f64::NEG_INFINITY)),
                )
                .then(a.seed.cmp(&b.seed))
        });
    }

    /// Mean, std (population), min, max, and range per (loss, sweep value)
    /// group, recomputed from the raw rows.
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let mut groups: Vec<(String, Option<f64>)> = Vec::new();
        for r in &self.rows {
            let key = (r.loss.clone(), r.sweep_value);
            if !groups.contains(&key) {
                groups.push(key);
            }
        }
        let mut out = Vec::new();
        for (loss, sweep_value) in groups {
            let members: Vec<[f64; 5]> = self
                .rows
                .iter()
                .filter(|r| r.loss == loss && r.sweep_value == sweep_value)
                .map(ResultRow::metrics)
                .collect();
            let n = members.len() as f64;
            let mut mean = [0.0f64; 5];
            let mut min = [f64::INFINITY; 5];
            let mut max = [f64::NEG_INFINITY; 5];
            for m in &members {
                for i in 0..5 {
                    mean[i] += m[i] / n;
                    min[i] = min[i].min(m[i]);
                    max[i] = max[i].max(m[i]);
                }
            }
            let mut std = [0.0f64; 5];
            for m in &members {
                for i in 0..5 {
                    std[i] += (m[i] - mean[i]).powi(2) / n;
                }
            }
            for s in &mut std {
                *s = s.sqrt();
            }
            let mut range = [0.0f64; 5];
            for i in 0..5 {
                range[i] = max[i] - min[i];
            }
            for (statistic, values) in [
                ("mean", mean),
                ("std", std),
                ("min", min),
                ("max", max),
                ("range", range),
            ] {
                out.push(AggregateRow {
                    loss: loss.clone(),
                    sweep_value,
                    statistic,
                    values,
                });
            }
        }
        out
    }

    /// CSV with the raw rows followed by the aggregate rows; fully
    /// deterministic for a given set of rows.
    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv_writer(path)?;
        let mut header = vec!["loss", "sweep_value", "seed", "statistic"];
        header.extend(METRIC_COLUMNS);
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let metrics = r.metrics();
            writeln!(
                w,
                "{},{},{},raw,{}",
                r.loss,
                fmt_opt(r.sweep_value),
                r.seed,
                metrics.map(|v| format!("{v}")).join(",")
            )?;
        }
        for a in self.aggregates() {
            writeln!(
                w,
                "{},{},,{},{}",
                a.loss,
                fmt_opt(a.sweep_value),
                a.statistic,
                a.values.map(|v| format!("{v}")).join(",")
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn csv_writer(path: &Path) -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

use std::io::Write;
