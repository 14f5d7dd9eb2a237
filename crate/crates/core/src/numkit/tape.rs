//! Reverse-mode differentiation on a linear tape.
//!
//! Every operation appends a node holding its value and the indices of its
//! inputs. [`Tape::backward`] walks the tape once in reverse and stores the
//! adjoint of every node in the node's tensor `grad`. A tape may be
//! differentiated once; build a fresh tape for the next step. Leaves used
//! several times on one tape (shared weights) accumulate their adjoints.
//!
//! Shape mismatches inside graph operations are programmer errors and panic;
//! the checked entry points live on [`Mlp`](super::Mlp).

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    LogSoftmax(Var),
    Gather { a: Var, index: Vec<usize> },
    Softplus(Var),
    Exp(Var),
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    differentiated: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "scalar() on a node with {} elements", t.len());
        t.data()[0]
    }

    /// Adjoint of `v`, available after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Adjoint of `v` as a tensor with `v`'s shape; zeros before backward.
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let value = self.value(v);
        match value.grad() {
            Some(g) => Tensor::new(value.shape().to_vec(), g.to_vec()).expect("grad length"),
            None => Tensor::zeros(value.shape()),
        }
    }

    /// `x · wᵀ + b`, with `x` shaped `[n, in]` or `[in]`, `w` `[out, in]`, `b` `[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let value = kernels::linear(self.value(x), self.value(w), self.value(b));
        self.push(value, Op::Linear { x, w, b })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|v| v.tanh()).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape");
        self.push(value, Op::Tanh(a))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "elementwise op on shapes {:?} and {:?}",
            ta.shape(),
            tb.shape()
        );
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("shape");
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|v| v * c).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape");
        self.push(value, Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert!(!t.is_empty(), "mean of an empty tensor");
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// Row-wise log-softmax over the last dimension.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let value = kernels::log_softmax(self.value(a));
        self.push(value, Op::LogSoftmax(a))
    }

    /// Picks `a[i, index[i]]` from a `[n, k]` matrix, giving a `[n]` vector.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Var {
        let t = self.value(a);
        let k = t.last_dim();
        assert_eq!(t.rows(), index.len(), "gather: one index per row");
        let data = index
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                assert!(j < k, "gather index {j} out of range {k}");
                t.data()[i * k + j]
            })
            .collect();
        self.push(
            Tensor::vector(data),
            Op::Gather {
                a,
                index: index.to_vec(),
            },
        )
    }

    /// `ln(1 + eˣ)`, computed without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&v| kernels::softplus(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape");
        self.push(value, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|v| v.exp()).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape");
        self.push(value, Op::Exp(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.value(a).reshape(shape.to_vec()).expect("reshape size");
        self.push(value, Op::Reshape(a))
    }

    /// Propagates adjoints from the scalar `loss` to every node.
    ///
    /// Fails if `loss` has more than one element or if the tape was already
    /// differentiated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.differentiated {
            return Err(Error::Contract(
                "backward already ran on this tape; record a new tape".into(),
            ));
        }
        let n = self.value(loss).len();
        if n != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {n} elements"
            )));
        }
        self.differentiated = true;

        let mut adj: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adj[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            if adj[i].iter().all(|g| *g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) = kernels::linear_backward(
                        &g,
                        self.value(*x),
                        self.value(*w),
                    );
                    accumulate(&mut adj[x.0], &gx);
                    accumulate(&mut adj[w.0], &gw);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], &g);
                    accumulate(&mut adj[b.0], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[a.0], &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut adj[b.0], &neg);
                }
                Op::Mul(a, b) => {
                    let va = self.value(*a).data();
                    let vb = self.value(*b).data();
                    let ga: Vec<f64> = g.iter().zip(vb).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> = g.iter().zip(va).map(|(g, x)| g * x).collect();
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|v| v * c).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.value(*a).len()];
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    let ga = vec![g[0] / n as f64; n];
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::LogSoftmax(a) => {
                    let ga = kernels::log_softmax_backward(&g, &node.value);
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Gather { a, index } => {
                    let k = self.value(*a).last_dim();
                    let slot = &mut adj[a.0];
                    for (row, (&j, gv)) in index.iter().zip(&g).enumerate() {
                        slot[row * k + j] += gv;
                    }
                }
                Op::Softplus(a) => {
                    let x = self.value(*a).data();
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(x)
                        .map(|(g, x)| g * kernels::sigmoid(*x))
                        .collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Reshape(a) => accumulate(&mut adj[a.0], &g),
            }
            adj[i] = g;
        }

        for (node, g) in self.nodes.iter_mut().zip(adj) {
            node.value.set_grad(g);
        }
        Ok(())
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
