//! Dirichlet prior over simplex thresholds: sampling, density, and the
//! Hoeffding rule for choosing the Monte-Carlo sample count.
//!
//! Thresholds are drawn once, up front, and reused unchanged for the rest of
//! a training run. Sampling uses normalized Gamma(α_i, 1) variates driven by a
//! ChaCha8 stream cipher RNG, so a fixed seed reproduces the same draws on any
//! platform.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::simplex::SimplexPoint;

#[derive(Debug, Error)]
pub enum DirichletError {
    #[error("concentration parameter alpha[{index}] = {value} must be positive and finite")]
    BadAlpha { index: usize, value: f64 },
    #[error("prior needs at least 2 components, got {0}")]
    TooFewComponents(usize),
    #[error("dimension mismatch: prior has {prior} components, point has {point}")]
    DimensionMismatch { prior: usize, point: usize },
    #[error("density diverges at the boundary: z[{index}] = 0 with alpha[{index}] = {alpha} < 1")]
    BoundaryDivergence { index: usize, alpha: f64 },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("delta must be in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("sample count must be at least 1")]
    EmptySampleCount,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed threshold file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// A Dirichlet distribution Dir(α) on the (m−1)-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrior {
    alpha: Vec<f64>,
}

impl DirichletPrior {
    pub fn new(alpha: Vec<f64>) -> Result<Self, DirichletError> {
        if alpha.len() < 2 {
            return Err(DirichletError::TooFewComponents(alpha.len()));
        }
        for (i, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 {
                return Err(DirichletError::BadAlpha { index: i, value: a });
            }
        }
        Ok(Self { alpha })
    }

    /// Symmetric prior with α_i ≡ alpha for all m components.
    pub fn symmetric(alpha: f64, m: usize) -> Result<Self, DirichletError> {
        Self::new(vec![alpha; m])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Mean α_i / Σα per coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let s: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / s).collect()
    }

    /// Variance α_i(Σα − α_i) / (Σα² (Σα + 1)) per coordinate.
    pub fn variance(&self) -> Vec<f64> {
        let s: f64 = self.alpha.iter().sum();
        self.alpha
            .iter()
            .map(|a| a * (s - a) / (s * s * (s + 1.0)))
            .collect()
    }

    /// Log-density at `z`, in the parameterization whose integral over the
    /// simplex is 1 (so Dir(1,1,1) has density Γ(3) = 2 everywhere).
    ///
    /// Boundary points return `-inf` when the vanishing coordinate has
    /// α_i > 1, and an error when α_i < 1 (the density diverges there).
    pub fn log_pdf(&self, z: &SimplexPoint) -> Result<f64, DirichletError> {
        if z.dim() != self.dim() {
            return Err(DirichletError::DimensionMismatch {
                prior: self.dim(),
                point: z.dim(),
            });
        }
        let mut acc = ln_gamma(self.alpha.iter().sum());
        for (i, (&a, &zi)) in self.alpha.iter().zip(z.values()).enumerate() {
            acc -= ln_gamma(a);
            if zi == 0.0 {
                if a < 1.0 {
                    return Err(DirichletError::BoundaryDivergence { index: i, alpha: a });
                }
                if a > 1.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                // a == 1: the factor is z^0 = 1.
            } else {
                acc += (a - 1.0) * zi.ln();
            }
        }
        Ok(acc)
    }
}

/// An immutable batch of thresholds drawn once from a prior.
#[derive(Debug, Clone)]
pub struct ThresholdSet {
    samples: Vec<SimplexPoint>,
    seed: u64,
    prior: DirichletPrior,
}

impl ThresholdSet {
    pub fn from_samples(
        samples: Vec<SimplexPoint>,
        prior: DirichletPrior,
        seed: u64,
    ) -> Result<Self, DirichletError> {
        if samples.is_empty() {
            return Err(DirichletError::EmptySampleCount);
        }
        Ok(Self {
            samples,
            seed,
            prior,
        })
    }

    pub fn samples(&self) -> &[SimplexPoint] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn prior(&self) -> &DirichletPrior {
        &self.prior
    }

    /// Writes one comma-separated simplex point per row.
    ///
    /// Floats use Rust's shortest round-trip formatting, so a reload
    /// reproduces the samples bit-exactly.
    pub fn save(&self, path: &Path) -> Result<(), DirichletError> {
        let mut w = BufWriter::new(File::create(path)?);
        for s in &self.samples {
            let row: Vec<String> = s.values().iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn load(path: &Path, prior: DirichletPrior, seed: u64) -> Result<Self, DirichletError> {
        let r = BufReader::new(File::open(path)?);
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let values: Result<Vec<f64>, _> =
                line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let values = values.map_err(|e| DirichletError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            let point = SimplexPoint::new(values).map_err(|e| DirichletError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            samples.push(point);
        }
        Self::from_samples(samples, prior, seed)
    }
}

/// Draws `n` independent Dirichlet(α) thresholds, deterministically for a
/// fixed seed, via normalized Gamma(α_i, 1) variates.
pub fn sample_thresholds(
    prior: &DirichletPrior,
    n: usize,
    seed: u64,
) -> Result<ThresholdSet, DirichletError> {
    if n == 0 {
        return Err(DirichletError::EmptySampleCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas: Vec<Gamma<f64>> = prior
        .alpha()
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("alpha validated positive"))
        .collect();
    let mut samples = Vec::with_capacity(n);
    while samples.len() < n {
        let mut v: Vec<f64> = gammas.iter().map(|g| g.sample(&mut rng)).collect();
        let sum: f64 = v.iter().sum();
        if sum < f64::MIN_POSITIVE {
            // All variates underflowed (only possible for tiny alpha); redraw.
            continue;
        }
        v.iter_mut().for_each(|x| *x /= sum);
        let point = SimplexPoint::new(v).expect("normalized gammas lie on the simplex");
        samples.push(point);
    }
    ThresholdSet::from_samples(samples, prior.clone(), seed)
}

/// The sample count N = ⌈ln(2/δ) / (2ε²)⌉ guaranteeing Monte-Carlo membership
/// error below ε with probability at least 1−δ.
pub fn hoeffding_samples(epsilon: f64, delta: f64) -> Result<usize, DirichletError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(DirichletError::BadEpsilon(epsilon));
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(DirichletError::BadDelta(delta));
    }
    Ok(((2.0 / delta).ln() / (2.0 * epsilon * epsilon)).ceil() as usize)
}
