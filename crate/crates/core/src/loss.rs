//! The MultiSOL objective and its exact gradient, plus cross-entropy and
//! squared-loss baselines.
//!
//! MultiSOL is batchwise: the smoothed expected confusion matrix of the whole
//! batch is scored per class and macro-averaged, and the loss is the negated
//! average. Gradients flow through the predictions only; the sampled
//! thresholds are constants.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confusion::{
    self, mc_hard_membership, sigmoid, smoothed_membership, soft_confusions_from_membership,
    ConfusionError,
};
use crate::dirichlet::{sample_thresholds, DirichletError, DirichletPrior, ThresholdSet};
use crate::score::{self, ScoreKind};
use crate::simplex::{HardLabel, SimplexPoint};

/// Predicted probabilities are clamped here inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Confusion(#[from] ConfusionError),
    #[error(transparent)]
    Dirichlet(#[from] DirichletError),
    #[error(transparent)]
    Score(#[from] score::ScoreError),
    #[error("threshold set has {got} samples, config expects {expected}")]
    ThresholdCountMismatch { got: usize, expected: usize },
    #[error("threshold dimension {thresholds} does not match prediction dimension {preds}")]
    ThresholdDimMismatch { thresholds: usize, preds: usize },
    #[error("class weights cover {weights} classes, batch has {m}")]
    WeightDimMismatch { weights: usize, m: usize },
    #[error("class {0} has no samples; balanced weights are undefined")]
    EmptyClass(usize),
}

/// Configuration of a MultiSOL loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub score: ScoreKind,
    /// Symmetric Dirichlet concentration.
    pub alpha: f64,
    /// Number of sampled thresholds.
    pub n_thresholds: usize,
    /// Sigmoid steepness.
    pub lambda: f64,
    /// Seed for the one-time threshold draw.
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            score: ScoreKind::Accuracy,
            alpha: 1.0,
            n_thresholds: 1024,
            lambda: 10.0,
            seed: 0,
        }
    }
}

impl LossConfig {
    /// Draws the threshold set this config describes, for `m` classes.
    pub fn draw_thresholds(&self, m: usize) -> Result<ThresholdSet, DirichletError> {
        let prior = DirichletPrior::symmetric(self.alpha, m)?;
        sample_thresholds(&prior, self.n_thresholds, self.seed)
    }
}

/// Which training loss to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LossSelector {
    Multisol(LossConfig),
    CrossEntropy,
    WeightedCrossEntropy,
    Squared,
}

/// Evaluated loss. `per_class_scores` is populated only for MultiSOL, where
/// the value is the negated mean of the per-class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub per_class_scores: Vec<f64>,
}

/// Balanced per-class weights `w_j = n / (m · n_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    w: Vec<f64>,
}

impl ClassWeights {
    pub fn balanced(labels: &[HardLabel], m: usize) -> Result<Self, LossError> {
        let mut counts = vec![0usize; m];
        for &l in labels {
            counts[l.index()] += 1;
        }
        let n = labels.len() as f64;
        let mut w = Vec::with_capacity(m);
        for (j, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(LossError::EmptyClass(j));
            }
            w.push(n / (m as f64 * c as f64));
        }
        Ok(Self { w })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

fn check_thresholds(
    preds: &[SimplexPoint],
    cfg: &LossConfig,
    thresholds: &ThresholdSet,
) -> Result<(), LossError> {
    if thresholds.len() != cfg.n_thresholds {
        return Err(LossError::ThresholdCountMismatch {
            got: thresholds.len(),
            expected: cfg.n_thresholds,
        });
    }
    let m = preds.first().map(|p| p.dim()).unwrap_or(0);
    let tm = thresholds.samples()[0].dim();
    if m != 0 && tm != m {
        return Err(LossError::ThresholdDimMismatch {
            thresholds: tm,
            preds: m,
        });
    }
    Ok(())
}

fn assemble(kind: ScoreKind, cms: &[confusion::SoftConfusion]) -> Result<LossValue, LossError> {
    let per_class: Result<Vec<f64>, _> =
        cms.iter().map(|cm| score::score(kind, cm)).collect();
    let per_class = per_class?;
    let value = -per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(LossValue {
        value,
        per_class_scores: per_class,
    })
}

/// The MultiSOL loss of a batch: minus the macro-averaged score of the
/// smoothed expected confusion matrices.
pub fn multisol(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    cfg: &LossConfig,
    thresholds: &ThresholdSet,
) -> Result<LossValue, LossError> {
    check_thresholds(preds, cfg, thresholds)?;
    let cms = confusion::soft_confusions(preds, labels, thresholds, cfg.lambda)?;
    assemble(cfg.score, &cms)
}

/// MultiSOL evaluated with exact (hard) indicators instead of the sigmoid
/// product. Not differentiable; used as an oracle.
pub fn multisol_hard_indicator(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    kind: ScoreKind,
    thresholds: &ThresholdSet,
) -> Result<LossValue, LossError> {
    let membership: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| mc_hard_membership(p, thresholds))
        .collect();
    let m = preds.first().map(|p| p.dim()).unwrap_or(0);
    let cms = soft_confusions_from_membership(&membership, labels, m);
    assemble(kind, &cms)
}

/// MultiSOL value together with its gradient with respect to every
/// prediction entry (an n×m matrix).
pub fn multisol_with_grad(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    cfg: &LossConfig,
    thresholds: &ThresholdSet,
) -> Result<(LossValue, Array2<f64>), LossError> {
    check_thresholds(preds, cfg, thresholds)?;
    let membership: Result<Vec<Vec<f64>>, _> = preds
        .iter()
        .map(|p| smoothed_membership(p, thresholds, cfg.lambda))
        .collect();
    let membership = membership?;
    let n = preds.len();
    let m = preds[0].dim();
    let cms = soft_confusions_from_membership(&membership, labels, m);
    let loss = assemble(cfg.score, &cms)?;

    // dL/du_ij depends only on the class of sample i: through (tp, fn) for
    // the labeled class, through (fp, tn) otherwise.
    let grads: Vec<[f64; 4]> = cms
        .iter()
        .map(|cm| score::score_grad(cfg.score, (cm.true_neg, cm.false_pos, cm.false_neg, cm.true_pos)))
        .collect();
    let scale = -1.0 / m as f64;
    let coeff = |label: HardLabel, j: usize| -> f64 {
        let [d_tn, d_fp, d_fn, d_tp] = grads[j];
        if label.index() == j {
            scale * (d_tp - d_fn)
        } else {
            scale * (d_fp - d_tn)
        }
    };

    let lambda = cfg.lambda;
    let inv_n_thr = 1.0 / thresholds.len() as f64;
    let mut grad = Array2::<f64>::zeros((n, m));
    let mut sig = vec![0.0f64; m * m];
    for (i, (pred, &label)) in preds.iter().zip(labels).enumerate() {
        let pv = pred.values();
        let coeffs: Vec<f64> = (0..m).map(|j| coeff(label, j) * inv_n_thr).collect();
        for tau in thresholds.samples() {
            let tv = tau.values();
            for j in 0..m {
                for k in (j + 1)..m {
                    let s = sigmoid(lambda * (pv[j] - pv[k] - tv[j] + tv[k]));
                    sig[j * m + k] = s;
                    sig[k * m + j] = 1.0 - s;
                }
            }
            for j in 0..m {
                let mut prod = 1.0;
                for k in 0..m {
                    if k != j {
                        prod *= sig[j * m + k];
                    }
                }
                let base = coeffs[j] * lambda * prod;
                if base == 0.0 {
                    continue;
                }
                let mut own = 0.0;
                for k in 0..m {
                    if k != j {
                        let tail = 1.0 - sig[j * m + k];
                        own += tail;
                        grad[[i, k]] -= base * tail;
                    }
                }
                grad[[i, j]] += base * own;
            }
        }
    }
    Ok((loss, grad))
}

fn check_weights(weights: Option<&ClassWeights>, m: usize) -> Result<(), LossError> {
    if let Some(w) = weights {
        if w.w.len() != m {
            return Err(LossError::WeightDimMismatch {
                weights: w.w.len(),
                m,
            });
        }
    }
    Ok(())
}

/// (Optionally class-weighted) categorical cross-entropy.
pub fn cross_entropy(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    weights: Option<&ClassWeights>,
) -> Result<LossValue, LossError> {
    let (value, _) = ce_impl(preds, labels, weights, false)?;
    Ok(value)
}

/// Cross-entropy with its gradient with respect to every prediction entry.
pub fn cross_entropy_with_grad(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    weights: Option<&ClassWeights>,
) -> Result<(LossValue, Array2<f64>), LossError> {
    let (value, grad) = ce_impl(preds, labels, weights, true)?;
    Ok((value, grad.expect("grad requested")))
}

fn ce_impl(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
    weights: Option<&ClassWeights>,
    want_grad: bool,
) -> Result<(LossValue, Option<Array2<f64>>), LossError> {
    if preds.is_empty() {
        return Err(ConfusionError::EmptyBatch.into());
    }
    if preds.len() != labels.len() {
        return Err(ConfusionError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        }
        .into());
    }
    let n = preds.len();
    let m = preds[0].dim();
    check_weights(weights, m)?;
    let mut acc = 0.0;
    let mut grad = want_grad.then(|| Array2::<f64>::zeros((n, m)));
    for (i, (pred, &label)) in preds.iter().zip(labels).enumerate() {
        let w = weights.map(|cw| cw.w[label.index()]).unwrap_or(1.0);
        let p = pred.values()[label.index()].max(LOG_CLAMP);
        acc -= w * p.ln();
        if let Some(g) = grad.as_mut() {
            g[[i, label.index()]] = -w / (n as f64 * p);
        }
    }
    Ok((
        LossValue {
            value: acc / n as f64,
            per_class_scores: Vec::new(),
        },
        grad,
    ))
}

/// Mean squared distance to the one-hot label.
pub fn squared_loss(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
) -> Result<LossValue, LossError> {
    squared_impl(preds, labels).map(|(v, _)| v)
}

pub fn squared_loss_with_grad(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
) -> Result<(LossValue, Array2<f64>), LossError> {
    squared_impl(preds, labels)
}

fn squared_impl(
    preds: &[SimplexPoint],
    labels: &[HardLabel],
) -> Result<(LossValue, Array2<f64>), LossError> {
    if preds.is_empty() {
        return Err(ConfusionError::EmptyBatch.into());
    }
    if preds.len() != labels.len() {
        return Err(ConfusionError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        }
        .into());
    }
    let n = preds.len();
    let m = preds[0].dim();
    let mut acc = 0.0;
    let mut grad = Array2::<f64>::zeros((n, m));
    for (i, (pred, &label)) in preds.iter().zip(labels).enumerate() {
        for (c, &p) in pred.values().iter().enumerate() {
            let target = if c == label.index() { 1.0 } else { 0.0 };
            acc += (p - target).powi(2);
            grad[[i, c]] = 2.0 * (p - target) / n as f64;
        }
    }
    Ok((
        LossValue {
            value: acc / n as f64,
            per_class_scores: Vec::new(),
        },
        grad,
    ))
}
