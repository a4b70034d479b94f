//! Experiment configuration: JSON in, defaults resolved, effective config
//! echoed back into the output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use multisol_core::data::{self, BlobSpec, Dataset};
use multisol_core::train::TrainConfig;

/// Where the samples come from. IDX datasets carry their own test split;
/// blobs and CSV data are split by `ExperimentConfig::split`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs(BlobSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![128, 64] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Train/validation/test fractions for datasets without a fixed test set;
    /// for IDX data the validation fraction is carved out of the train split.
    pub split: (f64, f64, f64),
    pub stratified: bool,
    /// Seed for dataset splitting (kept separate from the per-run seeds so
    /// every run sees the same split).
    pub split_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Blobs(BlobSpec::balanced(3, 250, 2.0, 0.3, 0)),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            seeds: vec![0],
            split: (0.8, 0.1, 0.1),
            stratified: true,
            split_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| format!("invalid config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects every invalid field rather than stopping at the first.
    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        match &self.dataset {
            DatasetSpec::Blobs(spec) => {
                if spec.num_classes < 2 {
                    problems.push("dataset.num_classes: need at least 2 classes".to_string());
                }
                if spec.counts.len() != spec.num_classes {
                    problems.push(format!(
                        "dataset.counts: {} entries for {} classes",
                        spec.counts.len(),
                        spec.num_classes
                    ));
                }
                if spec.counts.iter().any(|&c| c == 0) {
                    problems.push("dataset.counts: every class needs at least one sample".into());
                }
                if !(spec.std_dev > 0.0) {
                    problems.push(format!("dataset.std_dev: {} must be positive", spec.std_dev));
                }
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                for (name, p) in [
                    ("dataset.train_images", train_images),
                    ("dataset.train_labels", train_labels),
                    ("dataset.test_images", test_images),
                    ("dataset.test_labels", test_labels),
                ] {
                    if !p.is_file() {
                        problems.push(format!("{name}: no such file {}", p.display()));
                    }
                }
            }
            DatasetSpec::Csv { path, label_column } => {
                if !path.is_file() {
                    problems.push(format!("dataset.path: no such file {}", path.display()));
                }
                if label_column.is_empty() {
                    problems.push("dataset.label_column: must be non-empty".into());
                }
            }
        }
        if self.model.hidden.is_empty() {
            problems.push("model.hidden: need at least one hidden layer".into());
        }
        if self.model.hidden.iter().any(|&h| h == 0) {
            problems.push("model.hidden: layer widths must be positive".into());
        }
        if !(self.train.learning_rate >= 0.0) {
            problems.push(format!(
                "train.learning_rate: {} must be non-negative",
                self.train.learning_rate
            ));
        }
        if self.train.batch_size == 0 {
            problems.push("train.batch_size: must be positive".into());
        }
        if self.train.max_epochs == 0 {
            problems.push("train.max_epochs: must be positive".into());
        }
        if self.seeds.is_empty() {
            problems.push("seeds: need at least one seed".into());
        }
        let f = self.split;
        if f.0 <= 0.0 || f.1 <= 0.0 || f.2 <= 0.0 || (f.0 + f.1 + f.2 - 1.0).abs() > 1e-9 {
            problems.push(format!(
                "split: fractions ({}, {}, {}) must be positive and sum to 1",
                f.0, f.1, f.2
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }

    /// Writes the defaults-resolved config next to the results.
    pub fn echo(&self, out_dir: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(out_dir.join("config.json"), text + "\n")?;
        Ok(())
    }

    /// Loads and splits the dataset into train/validation/test.
    pub fn load_splits(&self) -> anyhow::Result<(Dataset, Dataset, Dataset)> {
        match &self.dataset {
            DatasetSpec::Blobs(spec) => {
                let ds = data::make_blobs(spec)?;
                Ok(data::split(&ds, self.split, self.split_seed, self.stratified)?)
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let full_train = data::load_idx(train_images, train_labels)?;
                let test = data::load_idx(test_images, test_labels)?;
                // Carve validation out of the provided train split, keeping
                // the published test set intact.
                let val_frac = self.split.1 / (self.split.0 + self.split.1);
                let (train, val, _) = data::split(
                    &full_train,
                    (1.0 - val_frac - 1e-9, val_frac, 2e-9),
                    self.split_seed,
                    self.stratified,
                )?;
                Ok((train, val, test))
            }
            DatasetSpec::Csv { path, label_column } => {
                let ds = data::load_csv(path, label_column)?;
                Ok(data::split(&ds, self.split, self.split_seed, self.stratified)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>("{\"bogus\": 1}").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn validation_lists_every_problem() {
        let cfg = ExperimentConfig {
            model: ModelSpec { hidden: vec![] },
            seeds: vec![],
            ..ExperimentConfig::default()
        };
        let msg = cfg.validate().unwrap_err();
        assert!(msg.contains("model.hidden"));
        assert!(msg.contains("seeds"));
    }
}
