//! One-vs-rest confusion matrices: hard counts at a fixed threshold, and
//! their smoothed Monte-Carlo expectations over a threshold prior.
//!
//! For each class `j` the membership of a prediction in region `R_j(τ)` is
//! averaged over the sampled thresholds. The exact indicator average
//! ([`mc_hard_membership`]) serves as the oracle for the differentiable
//! sigmoid-product version ([`smoothed_membership`]); FN/TN entries are built
//! as complements of TP/FP so every per-class matrix sums to the batch size
//! exactly.

use thiserror::Error;

use crate::dirichlet::ThresholdSet;
use crate::simplex::{self, HardLabel, SimplexError, SimplexPoint};

/// Sigmoid arguments are clamped here before exponentiation so that large λ
/// cannot overflow.
pub const SIGMOID_CLAMP: f64 = 500.0;

#[derive(Debug, Error)]
pub enum ConfusionError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("{preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("steepness lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Integer one-vs-rest counts at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HardConfusion {
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_pos: u64,
}

impl HardConfusion {
    pub fn total(&self) -> u64 {
        self.true_neg + self.false_pos + self.false_neg + self.true_pos
    }
}

/// Real-valued expected one-vs-rest counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftConfusion {
    pub true_neg: f64,
    pub false_pos: f64,
    pub false_neg: f64,
    pub true_pos: f64,
}

impl SoftConfusion {
    pub fn total(&self) -> f64 {
        self.true_neg + self.false_pos + self.false_neg + self.true_pos
    }
}

fn check_batch(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
) -> Result<usize, ConfusionError> {
    if preds.is_empty() {
        return Err(ConfusionError::EmptyBatch);
    }
    if preds.len() != labels.len() {
        return Err(ConfusionError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let m = preds[0].dim();
    for p in preds {
        if p.dim() != m {
            return Err(SimplexError::DimensionMismatch {
                left: m,
                right: p.dim(),
            }
            .into());
        }
    }
    for &l in labels {
        if l.index() >= m {
            return Err(SimplexError::ClassOutOfRange {
                index: l.index(),
                m,
            }
            .into());
        }
    }
    Ok(m)
}

/// Hard one-vs-rest confusion matrices at threshold `tau`, one per class,
/// using the tie-broken [`simplex::classify`].
pub fn hard_confusions(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    tau: &SimplexPoint,
) -> Result<Vec<HardConfusion>, ConfusionError> {
    let m = check_batch(preds, labels)?;
    if tau.dim() != m {
        return Err(SimplexError::DimensionMismatch {
            left: m,
            right: tau.dim(),
        }
        .into());
    }
    let mut out = vec![
        HardConfusion {
            true_neg: 0,
            false_pos: 0,
            false_neg: 0,
            true_pos: 0
        };
        m
    ];
    for (pred, &label) in preds.iter().zip(labels) {
        let assigned = simplex::classify(pred, tau)?.label.index();
        for (j, cm) in out.iter_mut().enumerate() {
            match (label.index() == j, assigned == j) {
                (true, true) => cm.true_pos += 1,
                (true, false) => cm.false_neg += 1,
                (false, true) => cm.false_pos += 1,
                (false, false) => cm.true_neg += 1,
            }
        }
    }
    Ok(out)
}

/// Logistic sigmoid with argument clamping.
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

/// Fraction of sampled thresholds whose region `R_j` contains `pred`, per
/// class `j` (the unsmoothed Monte-Carlo indicator average).
pub fn mc_hard_membership(pred: &SimplexPoint, thresholds: &ThresholdSet) -> Vec<f64> {
    let m = pred.dim();
    let mut counts = vec![0u64; m];
    for tau in thresholds.samples() {
        for (j, c) in counts.iter_mut().enumerate() {
            if simplex::in_region(pred, tau, j).unwrap_or(false) {
                *c += 1;
            }
        }
    }
    let n = thresholds.len() as f64;
    counts.iter().map(|&c| c as f64 / n).collect()
}

/// Smoothed region membership: entry `j` is
/// `(1/N) Σ_r Π_{k≠j} σ(λ(ŷ^j − ŷ^k − τ_r^j + τ_r^k))`.
///
/// Thresholds are accumulated in their stored order so results are
/// bit-reproducible.
pub fn smoothed_membership(
    pred: &SimplexPoint,
    thresholds: &ThresholdSet,
    lambda: f64,
) -> Result<Vec<f64>, ConfusionError> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(ConfusionError::BadLambda(lambda));
    }
    let m = pred.dim();
    let pv = pred.values();
    let mut acc = vec![0.0f64; m];
    let mut sig = vec![0.0f64; m * m];
    for tau in thresholds.samples() {
        let tv = tau.values();
        // σ for ordered pair (j,k); the (k,j) entry is the complement.
        for j in 0..m {
            for k in (j + 1)..m {
                let s = sigmoid(lambda * (pv[j] - pv[k] - tv[j] + tv[k]));
                sig[j * m + k] = s;
                sig[k * m + j] = 1.0 - s;
            }
        }
        for (j, a) in acc.iter_mut().enumerate() {
            let mut prod = 1.0;
            for k in 0..m {
                if k != j {
                    prod *= sig[j * m + k];
                }
            }
            *a += prod;
        }
    }
    let n = thresholds.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Assembles per-class soft confusion matrices from a membership row per
/// sample. FN/TN are complements of TP/FP, so each matrix totals the batch
/// size exactly.
pub fn soft_confusions_from_membership(
    membership: &[Vec<f64>],
    labels: &[HardLabel],
    m: usize,
) -> Vec<SoftConfusion> {
    let mut out = vec![
        SoftConfusion {
            true_neg: 0.0,
            false_pos: 0.0,
            false_neg: 0.0,
            true_pos: 0.0
        };
        m
    ];
    for (row, &label) in membership.iter().zip(labels) {
        for (j, cm) in out.iter_mut().enumerate() {
            let u = row[j];
            if label.index() == j {
                cm.true_pos += u;
                cm.false_neg += 1.0 - u;
            } else {
                cm.false_pos += u;
                cm.true_neg += 1.0 - u;
            }
        }
    }
    out
}

/// Monte-Carlo smoothed expected confusion matrices, one per class.
pub fn soft_confusions(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    thresholds: &ThresholdSet,
    lambda: f64,
) -> Result<Vec<SoftConfusion>, ConfusionError> {
    let m = check_batch(preds, labels)?;
    let membership: Result<Vec<Vec<f64>>, _> = preds
        .iter()
        .map(|p| smoothed_membership(p, thresholds, lambda))
        .collect();
    Ok(soft_confusions_from_membership(&membership?, labels, m))
}
