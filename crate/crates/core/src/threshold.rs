//! A-posteriori threshold tuning: exhaustive scan of a barycentric grid on
//! the simplex and CSV export of the resulting score surface.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confusion::{hard_confusions, ConfusionError};
use crate::dirichlet::{DirichletError, DirichletPrior};
use crate::score::{macro_score, ScoreError, ScoreKind};
use crate::simplex::{classify, HardLabel, SimplexError, SimplexPoint};

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("prediction batch is empty")]
    EmptyBatch,
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("grid dimension {grid} does not match prediction dimension {preds}")]
    DimensionMismatch { grid: usize, preds: usize },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Confusion(#[from] ConfusionError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Prior(#[from] DirichletError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// All points (c_1/k, …, c_m/k) with non-negative integer c_i summing to k,
/// in lexicographic order of (c_1, …, c_m); k = 0 degenerates to the single
/// barycenter point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricGrid {
    resolution: usize,
    points: Vec<SimplexPoint>,
}

impl BarycentricGrid {
    pub fn new(resolution: usize, m: usize) -> Result<Self, ThresholdError> {
        if m < 2 {
            return Err(SimplexError::TooFewEntries(m).into());
        }
        let points = if resolution == 0 {
            vec![SimplexPoint::barycenter(m)]
        } else {
            let mut points = Vec::new();
            let mut counts = vec![0usize; m];
            enumerate_compositions(resolution, m, 0, &mut counts, &mut points)?;
            points
        };
        Ok(Self { resolution, points })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn points(&self) -> &[SimplexPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn enumerate_compositions(
    k: usize,
    m: usize,
    level: usize,
    counts: &mut [usize],
    out: &mut Vec<SimplexPoint>,
) -> Result<(), ThresholdError> {
    let remaining: usize = k - counts[..level].iter().sum::<usize>();
    if level == m - 1 {
        counts[level] = remaining;
        let coords = counts.iter().map(|&c| c as f64 / k as f64).collect();
        out.push(SimplexPoint::new(coords)?);
        return Ok(());
    }
    for c in 0..=remaining {
        counts[level] = c;
        enumerate_compositions(k, m, level + 1, counts, out)?;
    }
    Ok(())
}

/// Metric evaluated at each grid threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMetric {
    /// Unweighted macro average of a per-class score.
    Macro(ScoreKind),
    /// Plain top-1 accuracy of the induced hard classification.
    Top1,
}

impl std::fmt::Display for ScanMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScanMetric::Macro(kind) => write!(f, "macro_{kind}"),
            ScanMetric::Top1 => write!(f, "top1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdScanResult {
    pub metric: ScanMetric,
    pub thresholds: Vec<SimplexPoint>,
    pub scores: Vec<f64>,
    pub best_index: usize,
}

impl ThresholdScanResult {
    pub fn best_threshold(&self) -> &SimplexPoint {
        &self.thresholds[self.best_index]
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best_index]
    }
}

fn metric_at(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    tau: &SimplexPoint,
    metric: ScanMetric,
) -> Result<f64, ThresholdError> {
    match metric {
        ScanMetric::Top1 => {
            let correct = preds
                .iter()
                .zip(labels)
                .map(|(p, l)| Ok(usize::from(classify(p, tau)?.label == *l)))
                .sum::<Result<usize, ThresholdError>>()?;
            Ok(correct as f64 / preds.len() as f64)
        }
        ScanMetric::Macro(kind) => {
            let cms = hard_confusions(preds, labels, tau)?;
            Ok(macro_score(kind, &cms)?)
        }
    }
}

/// Evaluates `metric` at every grid threshold; the best threshold is the
/// maximizer, ties broken by the lowest grid index.
pub fn scan(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    grid: &BarycentricGrid,
    metric: ScanMetric,
) -> Result<ThresholdScanResult, ThresholdError> {
    if preds.is_empty() {
        return Err(ThresholdError::EmptyBatch);
    }
    if preds.len() != labels.len() {
        return Err(ThresholdError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let m = preds[0].dim();
    if grid.points()[0].dim() != m {
        return Err(ThresholdError::DimensionMismatch {
            grid: grid.points()[0].dim(),
            preds: m,
        });
    }
    let mut scores = Vec::with_capacity(grid.len());
    for tau in grid.points() {
        scores.push(metric_at(preds, labels, tau, metric)?);
    }
    // Strictly-greater comparison keeps the lowest index on ties.
    let best_index = scores
        .iter()
        .enumerate()
        .fold(0usize, |best, (i, &s)| if s > scores[best] { i } else { best });
    Ok(ThresholdScanResult {
        metric,
        thresholds: grid.points().to_vec(),
        scores,
        best_index,
    })
}

/// Writes `tau_1,…,tau_m,score[,log_pdf]` rows; the `log_pdf` column appears
/// only when a prior is supplied.
pub fn heatmap_export(
    result: &ThresholdScanResult,
    prior: Option<&DirichletPrior>,
    path: &Path,
) -> Result<(), ThresholdError> {
    let m = result.thresholds[0].dim();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (1..=m).map(|i| format!("tau_{i}")).collect();
    header.push("score".into());
    if prior.is_some() {
        header.push("log_pdf".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (tau, &score) in result.thresholds.iter().zip(&result.scores) {
        let mut row: Vec<String> = tau.values().iter().map(|v| format!("{v}")).collect();
        row.push(format!("{score}"));
        if let Some(p) = prior {
            row.push(format!("{}", p.log_pdf(tau)?));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
