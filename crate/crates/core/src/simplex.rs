//! Points on the probability simplex and the natural threshold-based
//! classification rule.
//!
//! A multidimensional threshold `τ` on the simplex induces one open region per
//! class: `z` belongs to region `j` when `z^j − z^k > τ^j − τ^k` for every
//! `k ≠ j`. At the barycenter `τ = (1/m, …, 1/m)` this is exactly the argmax
//! rule. The regions partition the simplex up to measure-zero boundaries;
//! boundary points are resolved by a deterministic tie-break.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sum must land within this distance of 1 after renormalization.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Inputs whose sum deviates by less than this are renormalized; anything
/// further off is rejected.
pub const RENORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("simplex point needs at least 2 entries, got {0}")]
    TooFewEntries(usize),
    #[error("entry {index} = {value} is outside [0, 1]")]
    EntryOutOfRange { index: usize, value: f64 },
    #[error("entries sum to {sum}, too far from 1 to renormalize")]
    BadSum { sum: f64 },
    #[error("class index {index} out of range for {m} classes")]
    ClassOutOfRange { index: usize, m: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// A probability vector on the (m−1)-simplex.
///
/// Stored in full coordinates (all m entries), since the region inequalities
/// are expressed in pairwise differences of full coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    values: Vec<f64>,
}

impl SimplexPoint {
    /// Validates and, if the sum is within [`RENORM_TOLERANCE`] of 1,
    /// renormalizes the entries.
    pub fn new(values: Vec<f64>) -> Result<Self, SimplexError> {
        if values.len() < 2 {
            return Err(SimplexError::TooFewEntries(values.len()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || v > 1.0 + RENORM_TOLERANCE {
                return Err(SimplexError::EntryOutOfRange { index: i, value: v });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() >= RENORM_TOLERANCE {
            return Err(SimplexError::BadSum { sum });
        }
        let mut values = values;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            for v in &mut values {
                *v /= sum;
            }
        }
        Ok(Self { values })
    }

    /// The one-hot vertex `e_j` of the (m−1)-simplex.
    pub fn vertex(j: usize, m: usize) -> Result<Self, SimplexError> {
        if j >= m {
            return Err(SimplexError::ClassOutOfRange { index: j, m });
        }
        let mut values = vec![0.0; m];
        values[j] = 1.0;
        Self::new(values)
    }

    /// The barycenter `(1/m, …, 1/m)`, where the natural rule reduces to argmax.
    pub fn barycenter(m: usize) -> Self {
        Self::new(vec![1.0 / m as f64; m]).expect("barycenter is always valid for m >= 2")
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = SimplexError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.values
    }
}

/// A class index in `[0, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HardLabel(usize);

impl HardLabel {
    pub fn new(index: usize, m: usize) -> Result<Self, SimplexError> {
        if index >= m {
            return Err(SimplexError::ClassOutOfRange { index, m });
        }
        Ok(Self(index))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Outcome of classifying a point: the chosen class, and whether the point sat
/// on a region boundary so the strict inequalities selected no class and a
/// tie-break was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassDecision {
    pub label: HardLabel,
    pub on_boundary: bool,
}

fn check_dims(z: &SimplexPoint, tau: &SimplexPoint) -> Result<(), SimplexError> {
    if z.dim() != tau.dim() {
        return Err(SimplexError::DimensionMismatch {
            left: z.dim(),
            right: tau.dim(),
        });
    }
    Ok(())
}

/// True iff `z` lies in the open region of class `j` induced by threshold
/// `tau`: `z^j − z^k > τ^j − τ^k` for all `k ≠ j` (strict).
pub fn in_region(z: &SimplexPoint, tau: &SimplexPoint, j: usize) -> Result<bool, SimplexError> {
    check_dims(z, tau)?;
    let m = z.dim();
    if j >= m {
        return Err(SimplexError::ClassOutOfRange { index: j, m });
    }
    let zv = z.values();
    let tv = tau.values();
    Ok((0..m).all(|k| k == j || zv[j] - zv[k] > tv[j] - tv[k]))
}

/// Classifies `z` under threshold `tau`.
///
/// When exactly one open region contains `z` that class is returned with
/// `on_boundary = false`. Boundary points (no open region) are resolved by
/// maximizing `z^j − τ^j`, lowest index winning residual ties.
pub fn classify(z: &SimplexPoint, tau: &SimplexPoint) -> Result<ClassDecision, SimplexError> {
    check_dims(z, tau)?;
    let m = z.dim();
    for j in 0..m {
        if in_region(z, tau, j)? {
            return Ok(ClassDecision {
                label: HardLabel(j),
                on_boundary: false,
            });
        }
    }
    let zv = z.values();
    let tv = tau.values();
    let mut best = 0;
    for j in 1..m {
        if zv[j] - tv[j] > zv[best] - tv[best] {
            best = j;
        }
    }
    Ok(ClassDecision {
        label: HardLabel(best),
        on_boundary: true,
    })
}

/// The argmax rule: classification at the barycentric threshold.
pub fn argmax_rule(z: &SimplexPoint) -> ClassDecision {
    let bary = SimplexPoint::barycenter(z.dim());
    classify(z, &bary).expect("dimensions match by construction")
}
