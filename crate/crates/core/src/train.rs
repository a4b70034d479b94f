//! Training loop: Adam updates, per-epoch validation, early stopping on
//! validation loss, and best-checkpoint test metrics.

use ndarray::Array2;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confusion::hard_confusions;
use crate::data::Dataset;
use crate::dirichlet::ThresholdSet;
use crate::loss::{self, ClassWeights, LossError, LossSelector};
use crate::mlp::{MlpError, MlpModel};
use crate::score::{macro_score, ScoreKind};
use crate::simplex::{self, HardLabel, SimplexPoint};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch} ({context})")]
    NonFiniteLoss { epoch: usize, context: &'static str },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error(transparent)]
    Thresholds(#[from] crate::dirichlet::DirichletError),
    #[error(transparent)]
    Confusion(#[from] crate::confusion::ConfusionError),
    #[error(transparent)]
    Score(#[from] crate::score::ScoreError),
    #[error(transparent)]
    Tape(#[from] crate::tape::TapeError),
    #[error("dataset has {got} classes, model expects {expected}")]
    ClassMismatch { got: usize, expected: usize },
}

/// Training hyperparameters; defaults follow the experiment setup
/// (Adam at 1e-4, batches of 128, up to 500 epochs, patience 25).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub loss: LossSelector,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// L2 penalty coefficient applied to weight gradients; 0 disables.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossSelector::CrossEntropy,
            learning_rate: 1e-4,
            batch_size: 128,
            max_epochs: 500,
            patience: 25,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub top1_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose checkpoint minimized validation loss.
    pub best_epoch: usize,
    /// Epoch at which training halted.
    pub convergence_epoch: usize,
    pub test: TestMetrics,
}

/// Adam with bias correction (β1 = 0.9, β2 = 0.999, ε = 1e-8).
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: usize,
}

impl Adam {
    fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: 0,
        }
    }

    fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut Array2<f64>>, grads: &[Array2<f64>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            m.zip_mut_with(g, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(g, |vi, &gi| *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi);
            ndarray::Zip::from(p)
                .and(&*m)
                .and(&*v)
                .for_each(|pi, &mi, &vi| {
                    let mhat = mi / bc1;
                    let vhat = vi / bc2;
                    *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

struct LossContext {
    selector: LossSelector,
    thresholds: Option<ThresholdSet>,
    weights: Option<ClassWeights>,
}

impl LossContext {
    fn prepare(selector: &LossSelector, train: &Dataset) -> Result<Self, TrainError> {
        let thresholds = match selector {
            LossSelector::Multisol(cfg) => Some(cfg.draw_thresholds(train.num_classes)?),
            _ => None,
        };
        let weights = match selector {
            LossSelector::WeightedCrossEntropy => {
                Some(ClassWeights::balanced(&train.labels, train.num_classes)?)
            }
            _ => None,
        };
        Ok(Self {
            selector: selector.clone(),
            thresholds,
            weights,
        })
    }

    fn value(&self, preds: &[SimplexPoint], labels: &[HardLabel]) -> Result<f64, TrainError> {
        let v = match &self.selector {
            LossSelector::Multisol(cfg) => {
                loss::multisol(preds, labels, cfg, self.thresholds.as_ref().unwrap())?.value
            }
            LossSelector::CrossEntropy => loss::cross_entropy(preds, labels, None)?.value,
            LossSelector::WeightedCrossEntropy => {
                loss::cross_entropy(preds, labels, self.weights.as_ref())?.value
            }
            LossSelector::Squared => loss::squared_loss(preds, labels)?.value,
        };
        Ok(v)
    }

    fn value_and_grad(
        &self,
        preds: &[SimplexPoint],
        labels: &[HardLabel],
    ) -> Result<(f64, Array2<f64>), TrainError> {
        let (v, g) = match &self.selector {
            LossSelector::Multisol(cfg) => {
                let (lv, g) =
                    loss::multisol_with_grad(preds, labels, cfg, self.thresholds.as_ref().unwrap())?;
                (lv.value, g)
            }
            LossSelector::CrossEntropy => {
                let (lv, g) = loss::cross_entropy_with_grad(preds, labels, None)?;
                (lv.value, g)
            }
            LossSelector::WeightedCrossEntropy => {
                let (lv, g) = loss::cross_entropy_with_grad(preds, labels, self.weights.as_ref())?;
                (lv.value, g)
            }
            LossSelector::Squared => {
                let (lv, g) = loss::squared_loss_with_grad(preds, labels)?;
                (lv.value, g)
            }
        };
        Ok((v, g))
    }
}

fn rows_to_points(out: &Array2<f64>) -> Vec<SimplexPoint> {
    out.rows()
        .into_iter()
        .map(|r| SimplexPoint::new(r.to_vec()).expect("softmax rows lie on the simplex"))
        .collect()
}

fn batched_loss(
    model: &MlpModel,
    ctx: &LossContext,
    data: &Dataset,
    batch_size: usize,
) -> Result<f64, TrainError> {
    let n = data.len();
    let mut acc = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let x = data.features.slice(ndarray::s![start..end, ..]).to_owned();
        let preds = rows_to_points(&model.forward(&x)?);
        let v = ctx.value(&preds, &data.labels[start..end])?;
        acc += v * (end - start) as f64;
        start = end;
    }
    Ok(acc / n as f64)
}

/// Test-set metrics under the argmax rule.
pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<TestMetrics, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let preds = model.predict(&data.features)?;
    let correct = preds
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| simplex::argmax_rule(p).label == **l)
        .count();
    let bary = SimplexPoint::barycenter(data.num_classes);
    let cms = hard_confusions(&preds, &data.labels, &bary)?;
    Ok(TestMetrics {
        top1_accuracy: correct as f64 / data.len() as f64,
        macro_precision: macro_score(ScoreKind::Precision, &cms)?,
        macro_recall: macro_score(ScoreKind::Recall, &cms)?,
        macro_f1: macro_score(ScoreKind::F1, &cms)?,
    })
}

/// Trains `model` in place and returns the per-epoch history plus
/// best-checkpoint test metrics.
///
/// Early stopping: training halts once validation loss has not improved for
/// `patience` consecutive epochs; the best checkpoint is restored before the
/// test evaluation.
pub fn train(
    model: &mut MlpModel,
    train_set: &Dataset,
    val_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    for (set, name) in [(train_set, "train"), (val_set, "validation"), (test_set, "test")] {
        if set.is_empty() {
            return Err(TrainError::EmptySplit(name));
        }
    }
    if train_set.num_classes != model.num_classes() {
        return Err(TrainError::ClassMismatch {
            got: train_set.num_classes,
            expected: model.num_classes(),
        });
    }
    let ctx = LossContext::prepare(&cfg.loss, train_set)?;
    let shapes: Vec<(usize, usize)> = model.params().map(|p| (p.nrows(), p.ncols())).collect();
    let n_weight_mats = shapes.len() / 2;
    let mut adam = Adam::new(cfg.learning_rate, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_model = model.clone();
    let mut since_improvement = 0usize;
    let mut halted_at = cfg.max_epochs;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss_acc = 0.0;
        let mut start = 0;
        while start < n {
            let end = (start + cfg.batch_size).min(n);
            let idx = &order[start..end];
            let mut x = Array2::zeros((idx.len(), train_set.feature_dim()));
            let mut y = Vec::with_capacity(idx.len());
            for (row, &i) in idx.iter().enumerate() {
                x.row_mut(row).assign(&train_set.features.row(i));
                y.push(train_set.labels[i]);
            }
            let taped = model.forward_tape(&x)?;
            let preds = rows_to_points(taped.tape.value(taped.output));
            let (batch_loss, grad_pred) = ctx.value_and_grad(&preds, &y)?;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    context: "training batch",
                });
            }
            train_loss_acc += batch_loss * idx.len() as f64;
            let grads_by_node = taped.tape.backward(taped.output, grad_pred)?;
            let mut grads: Vec<Array2<f64>> = taped
                .weight_ids
                .iter()
                .chain(taped.bias_ids.iter())
                .map(|&id| {
                    grads_by_node
                        .get(id)
                        .cloned()
                        .unwrap_or_else(|| Array2::zeros((0, 0)))
                })
                .collect();
            if cfg.weight_decay > 0.0 {
                for (g, p) in grads.iter_mut().take(n_weight_mats).zip(model.params()) {
                    g.zip_mut_with(p, |gi, &pi| *gi += 2.0 * cfg.weight_decay * pi);
                }
            }
            adam.step(model.params_mut(), &grads);
            start = end;
        }
        let train_loss = train_loss_acc / n as f64;
        let val_loss = batched_loss(model, &ctx, val_set, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                context: "validation",
            });
        }
        let val_metrics = evaluate(model, val_set)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_top1: val_metrics.top1_accuracy,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_model = model.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                halted_at = epoch;
                break;
            }
        }
    }
    *model = best_model;
    let test = evaluate(model, test_set)?;
    let convergence_epoch = halted_at.min(epochs_len(&epochs));
    Ok(TrainReport {
        epochs,
        best_epoch,
        convergence_epoch,
        test,
    })
}

fn epochs_len(epochs: &[EpochRecord]) -> usize {
    epochs.last().map(|e| e.epoch).unwrap_or(0)
}
