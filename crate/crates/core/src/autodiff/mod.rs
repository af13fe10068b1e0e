//! Tape-based reverse-mode differentiation over dense row-major f64 tensors.
//!
//! Only the operations the model uses are provided. Broadcasting is limited
//! to adding a bias vector along the last axis.

mod checkpoint;
mod ops;

pub use checkpoint::{load_tensors, save_tensors, Checkpoint};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data: rows.concat(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Size of the last axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let c = self.last_dim().max(1);
        self.data.chunks(c).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, transpose_b: bool },
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Gelu { x: Var, tanh: bool },
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
}

#[derive(Debug)]
pub(crate) struct Node {
    pub value: Tensor,
    pub requires_grad: bool,
    pub op: Op,
}

/// Records operations in topological order. One tape per forward pass;
/// tapes are single-threaded but independent tapes may run concurrently.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
    tanh_gelu: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Switches GELU to the tanh approximation for every later `gelu` call.
    pub fn use_tanh_gelu(&mut self, on: bool) {
        self.tanh_gelu = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf: gradients are accumulated for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, true, Op::Leaf)
    }

    /// A detached input: no gradient is ever recorded for it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`; `None` for
    /// detached values or before `backward`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor {
            shape: self.nodes[v.0].value.shape.clone(),
            data: g.clone(),
        })
    }

    pub(crate) fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Populates gradients of the scalar `loss` for every node that depends
    /// on a trainable leaf. Calling it twice on one tape is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Autodiff("backward already ran on this tape; record a new forward pass".into()));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape
            )));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                ops::backprop(self, i, &g);
            }
            self.grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                self.grads[i] = None;
            }
        }
        Ok(())
    }

    pub(crate) fn accumulate(&mut self, v: Var, delta: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tp = Tape::new();
        let a = tp.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tp.constant(t(&[vec![1.0], vec![1.0]]));
        let c = tp.matmul(a, b).unwrap();
        assert_eq!(tp.value(c).data(), &[3.0, 7.0]);
        let i = tp.constant(t(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let ia = tp.matmul(i, a).unwrap();
        assert_eq!(tp.value(ia), tp.value(a));
        assert!(matches!(tp.matmul(b, b), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_examples() {
        let mut tp = Tape::new();
        let x = tp.constant(t(&[vec![0.0, 0.0], vec![1000.0, 0.0]]));
        let y = tp.softmax(x).unwrap();
        let d = tp.value(y).data();
        assert_eq!(&d[..2], &[0.5, 0.5]);
        assert!((d[2] - 1.0).abs() < 1e-12 && d[3] < 1e-300 + 1e-12);
        let bad = tp.constant(Tensor::new(&[1, 2], vec![f64::NAN, 0.0]).unwrap());
        assert!(tp.softmax(bad).is_err());
    }

    #[test]
    fn layer_norm_examples() {
        let mut tp = Tape::new();
        let x = tp.constant(t(&[vec![3.0, 3.0], vec![1.0, -1.0]]));
        let g = tp.constant(Tensor::filled(&[2], 1.0));
        let b = tp.constant(Tensor::zeros(&[2]));
        let y = tp.layer_norm(x, g, b, 1e-5).unwrap();
        let d = tp.value(y).data();
        assert_eq!(&d[..2], &[0.0, 0.0]);
        let s = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((d[2] - s).abs() < 1e-15 && (d[3] + s).abs() < 1e-15);
    }

    #[test]
    fn gelu_examples() {
        let mut tp = Tape::new();
        let x = tp.constant(Tensor::new(&[2], vec![0.0, 10.0]).unwrap());
        let y = tp.gelu(x);
        assert_eq!(tp.value(y).data()[0], 0.0);
        assert!((tp.value(y).data()[1] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn backward_contract() {
        let mut tp = Tape::new();
        let x = tp.leaf(Tensor::filled(&[2, 2], 0.3));
        let c = tp.constant(Tensor::filled(&[2, 2], 2.0));
        let p = tp.mul(x, c).unwrap();
        let s = tp.sum(p);
        let s2 = tp.sum(x);
        let total = tp.add(s, s2).unwrap();
        tp.backward(total).unwrap();
        assert_eq!(tp.grad(x).unwrap().data(), &[3.0; 4]);
        assert!(tp.grad(c).is_none());
        assert!(matches!(tp.backward(total), Err(Error::Autodiff(_))));

        let mut tp = Tape::new();
        let x = tp.leaf(Tensor::filled(&[2, 2], 1.0));
        let s = tp.sum(x);
        tp.backward(s).unwrap();
        assert_eq!(tp.grad(x).unwrap().data(), &[1.0; 4]);
    }
}
