//! Minimal reverse-mode differentiation tape over dense matrix operations.
//!
//! The computation graph of the MLP is small and static, so the tape records
//! just the handful of ops the model needs: matrix multiply, row-broadcast
//! bias add, ReLU, and row-wise softmax. Backward propagation is seeded with
//! the loss gradient with respect to the tape's output node.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TapeError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("seed gradient shape {seed:?} does not match output shape {output:?}")]
    BadSeed {
        seed: (usize, usize),
        output: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Adds a 1×c bias row to every row of the left operand.
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
}

struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Records a forward pass; consumed by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let v = &self.nodes[id.0].value;
        (v.nrows(), v.ncols())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ac != br {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                left: (ar, ac),
                right: (br, bc),
            });
        }
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TapeError> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(bias);
        if br != 1 || bc != ac {
            return Err(TapeError::ShapeMismatch {
                op: "add_row",
                left: (ar, ac),
                right: (br, bc),
            });
        }
        let value = &self.nodes[a.0].value + &self.nodes[bias.0].value;
        Ok(self.push(Op::AddRow(a, bias), value))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.mapv(|v| v.max(0.0));
        self.push(Op::Relu(a), value)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut value = self.nodes[a.0].value.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(Op::SoftmaxRows(a), value)
    }

    /// Propagates `seed` (dL/d output) back to every node, returning per-node
    /// gradients.
    pub fn backward(&self, output: NodeId, seed: Array2<f64>) -> Result<Gradients, TapeError> {
        let out_dims = self.dims(output);
        if (seed.nrows(), seed.ncols()) != out_dims {
            return Err(TapeError::BadSeed {
                seed: (seed.nrows(), seed.ncols()),
                output: out_dims,
            });
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.nodes[b.0].value.t());
                    let gb = self.nodes[a.0].value.t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::AddRow(a, bias) => {
                    let col_sum = g.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
                    accumulate(&mut grads[bias.0], col_sum);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Relu(a) => {
                    let mask = self.nodes[a.0].value.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads[a.0], g * mask);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[idx].value;
                    let mut ga = y * &g;
                    for (mut grow, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = grow.sum();
                        for (gv, yv) in grow.iter_mut().zip(yrow) {
                            *gv -= dot * yv;
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn matmul_backward_matches_hand_derivation() {
        let mut tape = Tape::new();
        let a = tape.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = tape.leaf(array![[0.5, -1.0], [2.0, 0.0]]);
        let c = tape.matmul(a, b).unwrap();
        let seed = array![[1.0, 1.0], [1.0, 1.0]];
        let grads = tape.backward(c, seed).unwrap();
        // dC/dA = seed * B^T, dC/dB = A^T * seed
        assert_eq!(grads.get(a).unwrap(), &array![[-0.5, 2.0], [-0.5, 2.0]]);
        assert_eq!(grads.get(b).unwrap(), &array![[4.0, 4.0], [6.0, 6.0]]);
    }

    #[test]
    fn full_pipeline_matches_finite_differences() {
        // x(1x2) -> matmul W(2x3) -> +bias -> relu -> matmul V(3x2) -> softmax
        let x0 = array![[0.3, -0.7]];
        let w0 = array![[0.2, -0.4, 0.6], [0.1, 0.5, -0.3]];
        let b0 = array![[0.05, -0.02, 0.1]];
        let v0 = array![[0.7, -0.2], [0.3, 0.4], [-0.5, 0.6]];
        let seed = array![[1.0, -2.0]];

        let run = |w: &Array2<f64>, v: &Array2<f64>| -> (f64, Option<(Tape, NodeId, NodeId, NodeId)>) {
            let mut tape = Tape::new();
            let x = tape.leaf(x0.clone());
            let wn = tape.leaf(w.clone());
            let bn = tape.leaf(b0.clone());
            let vn = tape.leaf(v.clone());
            let h = tape.matmul(x, wn).unwrap();
            let h = tape.add_row(h, bn).unwrap();
            let h = tape.relu(h);
            let o = tape.matmul(h, vn).unwrap();
            let o = tape.softmax_rows(o);
            let scalar: f64 = tape
                .value(o)
                .iter()
                .zip(seed.iter())
                .map(|(a, b)| a * b)
                .sum();
            (scalar, Some((tape, wn, vn, o)))
        };

        let (_, state) = run(&w0, &v0);
        let (tape, wn, vn, o) = state.unwrap();
        let grads = tape.backward(o, seed.clone()).unwrap();
        let gw = grads.get(wn).unwrap().clone();
        let gv = grads.get(vn).unwrap().clone();

        let h = 1e-6;
        for (grad, base, which) in [(&gw, &w0, 0usize), (&gv, &v0, 1)] {
            for i in 0..base.nrows() {
                for j in 0..base.ncols() {
                    let mut plus = base.clone();
                    plus[[i, j]] += h;
                    let mut minus = base.clone();
                    minus[[i, j]] -= h;
                    let (fp, _) = if which == 0 { run(&plus, &v0) } else { run(&w0, &plus) };
                    let (fm, _) = if which == 0 { run(&minus, &v0) } else { run(&w0, &minus) };
                    let fd = (fp - fm) / (2.0 * h);
                    assert_abs_diff_eq!(grad[[i, j]], fd, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Array2::zeros((2, 3)));
        let b = tape.leaf(Array2::zeros((2, 3)));
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.add_row(a, b).is_err());
        let c = tape.relu(a);
        assert!(tape.backward(c, Array2::zeros((1, 1))).is_err());
    }
}
