//! Multiclass score-oriented losses (MultiSOL).
//!
//! The crate builds the loss in layers:
//!
//! - [`simplex`]: probability vectors on the simplex and the threshold-based
//!   classification rule that generalizes argmax.
//! - [`dirichlet`]: Dirichlet priors over thresholds, sampling, and the
//!   Hoeffding rule for choosing the Monte-Carlo sample count.
//! - [`confusion`]: hard one-vs-rest confusion matrices and their smoothed,
//!   threshold-averaged counterparts.
//! - [`score`]: accuracy/precision/recall/F1 over confusion matrices.
//! - [`loss`]: the MultiSOL objective with exact gradients, plus cross-entropy
//!   and squared-loss baselines.
//! - [`tape`], [`mlp`], [`train`]: a minimal reverse-mode tape, the two-hidden-layer
//!   MLP, Adam, and an early-stopping training loop.
//! - [`data`]: synthetic blobs, IDX (MNIST-format) and CSV ingestion, splits.
//! - [`threshold`]: a-posteriori threshold scans on a barycentric grid and
//!   heatmap CSV export.

pub mod confusion;
pub mod data;
pub mod dirichlet;
pub mod loss;
pub mod mlp;
pub mod score;
pub mod simplex;
pub mod tape;
pub mod threshold;
pub mod train;

pub use confusion::{HardConfusion, SoftConfusion};
pub use data::{BlobSpec, Dataset};
pub use dirichlet::{DirichletPrior, ThresholdSet};
pub use loss::{ClassWeights, LossConfig, LossSelector, LossValue};
pub use mlp::MlpModel;
pub use score::ScoreKind;
pub use simplex::{ClassDecision, HardLabel, SimplexPoint};
pub use threshold::{BarycentricGrid, ScanMetric, ThresholdScanResult};
pub use train::{TrainConfig, TrainReport};
