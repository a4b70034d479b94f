//! The feed-forward classifier: dense layers with ReLU hidden activations and
//! a row-wise softmax output, plus checkpoint serialization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::simplex::SimplexPoint;
use crate::tape::{NodeId, Tape, TapeError};

const CHECKPOINT_MAGIC: &[u8; 8] = b"MSOLCKPT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("model needs at least input and output layers")]
    TooFewLayers,
    #[error("layer size must be positive")]
    ZeroLayerSize,
    #[error("input has {got} features, model expects {expected}")]
    InputWidth { got: usize, expected: usize },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 8]),
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Dense feed-forward network; hidden layers use ReLU, the output is softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    /// Row-major (in × out) per layer.
    weights: Vec<Array2<f64>>,
    /// 1 × out per layer.
    biases: Vec<Array2<f64>>,
}

/// Node ids of the parameters and output of a recorded forward pass.
pub struct TapedForward {
    pub tape: Tape,
    pub weight_ids: Vec<NodeId>,
    pub bias_ids: Vec<NodeId>,
    pub output: NodeId,
}

impl MlpModel {
    /// Kaiming-uniform fan-in initialization, seeded.
    pub fn new(input_dim: usize, hidden: &[usize], num_classes: usize, seed: u64) -> Result<Self, MlpError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(num_classes);
        if sizes.len() < 2 {
            return Err(MlpError::TooFewLayers);
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(MlpError::ZeroLayerSize);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.gen_range(-bound..bound)
            }));
            biases.push(Array2::zeros((1, fan_out)));
        }
        Ok(Self {
            sizes,
            weights,
            biases,
        })
    }

    /// The 128/64 two-hidden-layer architecture.
    pub fn standard(input_dim: usize, num_classes: usize, seed: u64) -> Result<Self, MlpError> {
        Self::new(input_dim, &[128, 64], num_classes, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.weights.iter().chain(self.biases.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    /// Forward pass on a tape; parameters become leaf nodes so their
    /// gradients are available after backward.
    pub fn forward_tape(&self, batch: &Array2<f64>) -> Result<TapedForward, MlpError> {
        if batch.ncols() != self.input_dim() {
            return Err(MlpError::InputWidth {
                got: batch.ncols(),
                expected: self.input_dim(),
            });
        }
        let mut tape = Tape::new();
        let mut cur = tape.leaf(batch.clone());
        let mut weight_ids = Vec::new();
        let mut bias_ids = Vec::new();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wn = tape.leaf(w.clone());
            let bn = tape.leaf(b.clone());
            weight_ids.push(wn);
            bias_ids.push(bn);
            cur = tape.matmul(cur, wn)?;
            cur = tape.add_row(cur, bn)?;
            cur = if l < last { tape.relu(cur) } else { tape.softmax_rows(cur) };
        }
        Ok(TapedForward {
            tape,
            weight_ids,
            bias_ids,
            output: cur,
        })
    }

    /// Forward pass without recording; returns the softmax output matrix.
    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>, MlpError> {
        let taped = self.forward_tape(batch)?;
        Ok(taped.tape.value(taped.output).clone())
    }

    /// Forward pass returning one simplex point per row.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Vec<SimplexPoint>, MlpError> {
        let out = self.forward(batch)?;
        Ok(out
            .rows()
            .into_iter()
            .map(|row| SimplexPoint::new(row.to_vec()).expect("softmax rows lie on the simplex"))
            .collect())
    }

    /// Self-describing binary checkpoint: magic, version, layer sizes, then
    /// weights and biases as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<(), MlpError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u32::<LittleEndian>(self.sizes.len() as u32)?;
        for &s in &self.sizes {
            w.write_u32::<LittleEndian>(s as u32)?;
        }
        for mat in self.weights.iter().chain(&self.biases) {
            for &v in mat.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MlpError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(MlpError::BadMagic(magic));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(MlpError::BadVersion(version));
        }
        let n_sizes = r.read_u32::<LittleEndian>()? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(MlpError::Corrupt(format!("{n_sizes} layer sizes")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(r.read_u32::<LittleEndian>()? as usize);
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(MlpError::Corrupt("zero layer size".into()));
        }
        let mut read_mat = |rows: usize, cols: usize| -> Result<Array2<f64>, MlpError> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.read_f64::<LittleEndian>()?);
            }
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| MlpError::Corrupt(e.to_string()))
        };
        let mut weights = Vec::new();
        for win in sizes.windows(2) {
            weights.push(read_mat(win[0], win[1])?);
        }
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            biases.push(read_mat(1, win[1])?);
        }
        Ok(Self {
            sizes,
            weights,
            biases,
        })
    }
}
