//! Dataset handling: synthetic Gaussian blobs, IDX (MNIST-format) and CSV
//! ingestion, and train/validation/test splits.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use ndarray::Array2;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::simplex::HardLabel;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad IDX magic 0x{found:08x} in {file}, expected 0x{expected:08x}")]
    BadMagic {
        file: String,
        found: u32,
        expected: u32,
    },
    #[error("truncated IDX file {0}")]
    Truncated(String),
    #[error("IDX image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown label column {0:?}")]
    UnknownColumn(String),
    #[error("row {row}: non-numeric cell {cell:?}")]
    BadCell { row: usize, cell: String },
    #[error("row {row}: label {label} is not a valid class index")]
    BadLabel { row: usize, label: String },
    #[error("dataset is empty")]
    Empty,
    #[error("blob spec: {0}")]
    BadBlobSpec(String),
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("class {class} has too few samples ({count}) to stratify")]
    TooFewForStratify { class: usize, count: usize },
}

/// A labeled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<HardLabel>,
    pub num_classes: usize,
    pub tag: Option<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    fn take(&self, indices: &[usize], tag: &str) -> Dataset {
        let d = self.feature_dim();
        let mut features = Array2::zeros((indices.len(), d));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            features.row_mut(row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            num_classes: self.num_classes,
            tag: Some(tag.to_string()),
        }
    }

    /// Writes the dataset as CSV with header `f1,…,fd,label`.
    ///
    /// Features use shortest round-trip float formatting so a reload is
    /// bit-identical.
    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.feature_dim();
        let mut header: Vec<String> = (1..=d).map(|i| format!("f{i}")).collect();
        header.push("label".to_string());
        w.write_record(&header)?;
        for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            rec.push(label.index().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Gaussian clusters with class means on a circle; the per-class counts allow
/// deliberate imbalance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub counts: Vec<usize>,
    pub radius: f64,
    pub std_dev: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn balanced(num_classes: usize, per_class: usize, radius: f64, std_dev: f64, seed: u64) -> Self {
        Self {
            num_classes,
            counts: vec![per_class; num_classes],
            radius,
            std_dev,
            seed,
        }
    }
}

/// 2-D Gaussian blobs, deterministic per seed.
pub fn make_blobs(spec: &BlobSpec) -> Result<Dataset, DataError> {
    if spec.counts.len() != spec.num_classes {
        return Err(DataError::BadBlobSpec(format!(
            "{} counts for {} classes",
            spec.counts.len(),
            spec.num_classes
        )));
    }
    if spec.num_classes < 2 || spec.counts.iter().any(|&c| c == 0) {
        return Err(DataError::BadBlobSpec("need >= 2 classes with positive counts".into()));
    }
    if spec.std_dev <= 0.0 || spec.radius <= 0.0 {
        return Err(DataError::BadBlobSpec("radius and std_dev must be positive".into()));
    }
    let n: usize = spec.counts.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = rand_distr::Normal::new(0.0, spec.std_dev).expect("validated std_dev");
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (j, &count) in spec.counts.iter().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * j as f64 / spec.num_classes as f64;
        let (cx, cy) = (spec.radius * angle.cos(), spec.radius * angle.sin());
        for _ in 0..count {
            features[[row, 0]] = cx + rng.sample(normal);
            features[[row, 1]] = cy + rng.sample(normal);
            labels.push(HardLabel::new(j, spec.num_classes).expect("class index in range"));
            row += 1;
        }
    }
    Ok(Dataset {
        features,
        labels,
        num_classes: spec.num_classes,
        tag: None,
    })
}

fn read_idx_header(
    r: &mut impl Read,
    file: &str,
    expected_magic: u32,
    n_dims: usize,
) -> Result<Vec<usize>, DataError> {
    let magic = r
        .read_u32::<BigEndian>()
        .map_err(|_| DataError::Truncated(file.to_string()))?;
    if magic != expected_magic {
        return Err(DataError::BadMagic {
            file: file.to_string(),
            found: magic,
            expected: expected_magic,
        });
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(
            r.read_u32::<BigEndian>()
                .map_err(|_| DataError::Truncated(file.to_string()))? as usize,
        );
    }
    Ok(dims)
}

/// Loads an IDX image/label file pair; pixels are scaled to [0, 1].
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, DataError> {
    let images_name = images.display().to_string();
    let labels_name = labels.display().to_string();

    let mut ir = BufReader::new(File::open(images)?);
    let dims = read_idx_header(&mut ir, &images_name, IDX_IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let d = rows * cols;
    let mut pixels = vec![0u8; n * d];
    ir.read_exact(&mut pixels)
        .map_err(|_| DataError::Truncated(images_name.clone()))?;

    let mut lr = BufReader::new(File::open(labels)?);
    let ldims = read_idx_header(&mut lr, &labels_name, IDX_LABELS_MAGIC, 1)?;
    if ldims[0] != n {
        return Err(DataError::CountMismatch {
            images: n,
            labels: ldims[0],
        });
    }
    let mut raw_labels = vec![0u8; n];
    lr.read_exact(&mut raw_labels)
        .map_err(|_| DataError::Truncated(labels_name.clone()))?;

    if n == 0 {
        return Err(DataError::Empty);
    }
    let num_classes = (*raw_labels.iter().max().unwrap() as usize + 1).max(2);
    let features = Array2::from_shape_vec(
        (n, d),
        pixels.into_iter().map(|p| p as f64 / 255.0).collect(),
    )
    .expect("shape matches pixel count");
    let labels = raw_labels
        .into_iter()
        .map(|l| HardLabel::new(l as usize, num_classes).expect("num_classes covers max label"))
        .collect();
    Ok(Dataset {
        features,
        labels,
        num_classes,
        tag: None,
    })
}

/// Loads a rectangular numeric CSV with a header row; every column except
/// `label_column` becomes a feature, in file order.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::UnknownColumn(label_column.to_string()))?;
    let d = headers.len() - 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<usize> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?; // ragged rows surface here
        let mut feat = Vec::with_capacity(d);
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let label: usize = cell.trim().parse().map_err(|_| DataError::BadLabel {
                    row: i + 1,
                    label: cell.to_string(),
                })?;
                raw_labels.push(label);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| DataError::BadCell {
                    row: i + 1,
                    cell: cell.to_string(),
                })?;
                feat.push(v);
            }
        }
        rows.push(feat);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let num_classes = (raw_labels.iter().copied().max().unwrap() + 1).max(2);
    let n = rows.len();
    let features =
        Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
            .expect("csv reader enforces rectangular records");
    let labels = raw_labels
        .into_iter()
        .map(|l| HardLabel::new(l, num_classes).expect("num_classes covers max label"))
        .collect();
    Ok(Dataset {
        features,
        labels,
        num_classes,
        tag: None,
    })
}

/// Splits into train/validation/test. Stratified splitting preserves
/// per-class proportions within ±1 sample per split.
pub fn split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
    stratified: bool,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| x <= 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(f));
    }
    if dataset.is_empty() {
        return Err(DataError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];

    let mut allocate = |indices: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        indices.shuffle(rng);
        let n = indices.len();
        // Largest-remainder rounding keeps every split within one sample of
        // its exact share.
        let exact: Vec<f64> = f.iter().map(|&x| x * n as f64).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
        let mut rest: usize = n - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            (exact[b] - sizes[b] as f64)
                .partial_cmp(&(exact[a] - sizes[a] as f64))
                .unwrap()
        });
        for &k in &order {
            if rest == 0 {
                break;
            }
            sizes[k] += 1;
            rest -= 1;
        }
        let mut start = 0;
        for (k, &sz) in sizes.iter().enumerate() {
            buckets[k].extend_from_slice(&indices[start..start + sz]);
            start += sz;
        }
    };

    if stratified {
        for class in 0..dataset.num_classes {
            let mut idx: Vec<usize> = (0..dataset.len())
                .filter(|&i| dataset.labels[i].index() == class)
                .collect();
            if idx.is_empty() {
                continue;
            }
            allocate(&mut idx, &mut rng);
        }
    } else {
        let mut idx: Vec<usize> = (0..dataset.len()).collect();
        allocate(&mut idx, &mut rng);
    }
    // Deterministic row order inside each split.
    for b in &mut buckets {
        b.sort_unstable();
    }
    Ok((
        dataset.take(&buckets[0], "train"),
        dataset.take(&buckets[1], "validation"),
        dataset.take(&buckets[2], "test"),
    ))
}
