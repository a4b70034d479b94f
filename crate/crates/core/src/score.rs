//! Classification scores over confusion-matrix entries, with macro averaging.
//!
//! Each score is non-decreasing in TP/TN and non-increasing in FP/FN. A 0/0
//! denominator evaluates to 0; during loss differentiation denominators get an
//! additive ε so gradients stay finite when a class is absent from a batch.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::confusion::{HardConfusion, SoftConfusion};

/// ε added to score denominators when differentiating.
pub const GRAD_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("confusion matrix total must be positive")]
    EmptyMatrix,
    #[error("need at least 2 per-class matrices, got {0}")]
    TooFewClasses(usize),
    #[error("unknown score kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::Accuracy,
        ScoreKind::Precision,
        ScoreKind::Recall,
        ScoreKind::F1,
    ];
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScoreKind::Accuracy => "accuracy",
            ScoreKind::Precision => "precision",
            ScoreKind::Recall => "recall",
            ScoreKind::F1 => "f1",
        };
        f.write_str(s)
    }
}

impl FromStr for ScoreKind {
    type Err = ScoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(ScoreKind::Accuracy),
            "precision" => Ok(ScoreKind::Precision),
            "recall" => Ok(ScoreKind::Recall),
            "f1" => Ok(ScoreKind::F1),
            other => Err(ScoreError::UnknownKind(other.to_string())),
        }
    }
}

/// Anything that exposes (tn, fp, fn, tp) entries as reals.
pub trait ConfusionEntries {
    fn entries(&self) -> (f64, f64, f64, f64);
}

impl ConfusionEntries for HardConfusion {
    fn entries(&self) -> (f64, f64, f64, f64) {
        (
            self.true_neg as f64,
            self.false_pos as f64,
            self.false_neg as f64,
            self.true_pos as f64,
        )
    }
}

impl ConfusionEntries for SoftConfusion {
    fn entries(&self) -> (f64, f64, f64, f64) {
        (self.true_neg, self.false_pos, self.false_neg, self.true_pos)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Evaluates `kind` on a confusion matrix. 0/0 denominators return 0.
pub fn score<C: ConfusionEntries>(kind: ScoreKind, cm: &C) -> Result<f64, ScoreError> {
    let (tn, fp, fn_, tp) = cm.entries();
    let total = tn + fp + fn_ + tp;
    if total <= 0.0 {
        return Err(ScoreError::EmptyMatrix);
    }
    Ok(match kind {
        ScoreKind::Accuracy => (tp + tn) / total,
        ScoreKind::Precision => ratio(tp, tp + fp),
        ScoreKind::Recall => ratio(tp, tp + fn_),
        ScoreKind::F1 => ratio(2.0 * tp, 2.0 * tp + fp + fn_),
    })
}

/// Unweighted mean of per-class scores.
pub fn macro_score<C: ConfusionEntries>(kind: ScoreKind, cms: &[C]) -> Result<f64, ScoreError> {
    if cms.len() < 2 {
        return Err(ScoreError::TooFewClasses(cms.len()));
    }
    let mut acc = 0.0;
    for cm in cms {
        acc += score(kind, cm)?;
    }
    Ok(acc / cms.len() as f64)
}

/// Partial derivatives of the score with respect to (tn, fp, fn, tp), with
/// ε-guarded denominators.
pub fn score_grad(kind: ScoreKind, entries: (f64, f64, f64, f64)) -> [f64; 4] {
    let (tn, fp, fn_, tp) = entries;
    match kind {
        ScoreKind::Accuracy => {
            let total = tn + fp + fn_ + tp + GRAD_EPS;
            let num = tp + tn;
            let d_pos = (total - num) / (total * total); // d/d(tn), d/d(tp)
            let d_neg = -num / (total * total); // d/d(fp), d/d(fn)
            [d_pos, d_neg, d_neg, d_pos]
        }
        ScoreKind::Precision => {
            let den = tp + fp + GRAD_EPS;
            [0.0, -tp / (den * den), 0.0, fp / (den * den) + GRAD_EPS / (den * den)]
        }
        ScoreKind::Recall => {
            let den = tp + fn_ + GRAD_EPS;
            [0.0, 0.0, -tp / (den * den), fn_ / (den * den) + GRAD_EPS / (den * den)]
        }
        ScoreKind::F1 => {
            let den = 2.0 * tp + fp + fn_ + GRAD_EPS;
            let d_tp = 2.0 * (fp + fn_ + GRAD_EPS) / (den * den);
            let d_f = -2.0 * tp / (den * den);
            [0.0, d_f, d_f, d_tp]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hard(tn: u64, fp: u64, fn_: u64, tp: u64) -> HardConfusion {
        HardConfusion {
            true_neg: tn,
            false_pos: fp,
            false_neg: fn_,
            true_pos: tp,
        }
    }

    #[test]
    fn reference_values() {
        let cm = hard(5, 1, 1, 3);
        assert_abs_diff_eq!(score(ScoreKind::Accuracy, &cm).unwrap(), 0.8);
        assert_abs_diff_eq!(score(ScoreKind::F1, &cm).unwrap(), 0.75);
        assert_abs_diff_eq!(score(ScoreKind::Precision, &cm).unwrap(), 0.75);
        assert_abs_diff_eq!(score(ScoreKind::Recall, &cm).unwrap(), 0.75);
        // Degenerate 0/0 precision.
        let empty_pos = hard(10, 0, 2, 0);
        assert_eq!(score(ScoreKind::Precision, &empty_pos).unwrap(), 0.0);
        assert!(score::<HardConfusion>(ScoreKind::Accuracy, &hard(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn macro_reference_values() {
        let cms = vec![hard(5, 1, 1, 3), hard(5, 1, 1, 3)];
        assert_abs_diff_eq!(macro_score(ScoreKind::F1, &cms).unwrap(), 0.75);
        // Perfect classifier scores 1 in every kind.
        let perfect = vec![hard(7, 0, 0, 3), hard(6, 0, 0, 4)];
        for kind in ScoreKind::ALL {
            assert_abs_diff_eq!(macro_score(kind, &perfect).unwrap(), 1.0);
        }
        // Mean of 0.75 and 0.25.
        let mixed = vec![hard(5, 1, 1, 3), hard(5, 3, 3, 1)];
        assert_abs_diff_eq!(macro_score(ScoreKind::F1, &mixed).unwrap(), 0.5);
        assert!(macro_score(ScoreKind::F1, &[hard(1, 0, 0, 1)]).is_err());
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in ScoreKind::ALL {
            assert_eq!(kind.to_string().parse::<ScoreKind>().unwrap(), kind);
        }
        assert!("jaccard".parse::<ScoreKind>().is_err());
    }

    proptest! {
        #[test]
        fn scores_are_monotone_and_ranged(
            tn in 0u64..30, fp in 0u64..30, fn_ in 0u64..30, tp in 0u64..30
        ) {
            prop_assume!(tn + fp + fn_ + tp > 0);
            let base = hard(tn, fp, fn_, tp);
            for kind in ScoreKind::ALL {
                let v = score(kind, &base).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
                // Non-decreasing in tp and tn.
                prop_assert!(score(kind, &hard(tn + 1, fp, fn_, tp)).unwrap() >= v);
                prop_assert!(score(kind, &hard(tn, fp, fn_, tp + 1)).unwrap() >= v);
                // Non-increasing in fp and fn.
                prop_assert!(score(kind, &hard(tn, fp + 1, fn_, tp)).unwrap() <= v);
                prop_assert!(score(kind, &hard(tn, fp, fn_ + 1, tp)).unwrap() <= v);
            }
        }

        #[test]
        fn gradient_matches_finite_differences(
            tn in 0.5f64..20.0, fp in 0.5f64..20.0, fn_ in 0.5f64..20.0, tp in 0.5f64..20.0
        ) {
            let h = 1e-6;
            for kind in ScoreKind::ALL {
                let g = score_grad(kind, (tn, fp, fn_, tp));
                let eval = |e: (f64, f64, f64, f64)| {
                    let cm = SoftConfusion {
                        true_neg: e.0, false_pos: e.1, false_neg: e.2, true_pos: e.3,
                    };
                    score(kind, &cm).unwrap()
                };
                let fd = [
                    (eval((tn + h, fp, fn_, tp)) - eval((tn - h, fp, fn_, tp))) / (2.0 * h),
                    (eval((tn, fp + h, fn_, tp)) - eval((tn, fp - h, fn_, tp))) / (2.0 * h),
                    (eval((tn, fp, fn_ + h, tp)) - eval((tn, fp, fn_ - h, tp))) / (2.0 * h),
                    (eval((tn, fp, fn_, tp + h)) - eval((tn, fp, fn_, tp - h))) / (2.0 * h),
                ];
                for (a, b) in g.iter().zip(&fd) {
                    prop_assert!((a - b).abs() < 1e-6, "{kind}: {a} vs {b}");
                }
            }
        }
    }
}
