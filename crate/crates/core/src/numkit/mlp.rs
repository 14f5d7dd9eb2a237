use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kernels;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Weight matrix `[out, in]` and bias `[out]` of one dense layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Dense feed-forward network: tanh on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::Contract(format!(
            "an MLP needs at least two positive layer widths, got {dims:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform initialization, `U(−a, a)` with `a = √(6/(fan_in+fan_out))`, zero biases.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(layer_dims)?;
        let mut rng = rng_from_seed(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..=a)).collect();
                Layer {
                    weight: Tensor::new(vec![fan_out, fan_in], data).expect("shape"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Ok(Mlp {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer {
                weight: Tensor::zeros(&[w[1], w[0]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Ok(Mlp {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Contract("an MLP needs at least one layer".into()))?;
        let mut dims = vec![first.weight.shape().get(1).copied().unwrap_or(0)];
        for layer in &layers {
            let ws = layer.weight.shape();
            let prev = *dims.last().unwrap();
            if ws.len() != 2 || ws[1] != prev {
                return Err(Error::Dimension {
                    expected: vec![ws.first().copied().unwrap_or(0), prev],
                    got: ws.to_vec(),
                });
            }
            if layer.bias.shape() != [ws[0]] {
                return Err(Error::Dimension {
                    expected: vec![ws[0]],
                    got: layer.bias.shape().to_vec(),
                });
            }
            dims.push(ws[0]);
        }
        check_dims(&dims)?;
        Ok(Mlp {
            layer_dims: dims,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened in layer order, weight before bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: vec![self.param_count()],
                got: vec![params.len()],
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for t in [&mut l.weight, &mut l.bias] {
                let n = t.len();
                t.data_mut().copy_from_slice(&params[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.last_dim() != self.input_dim() || x.is_empty() {
            let mut expected = x.shape().to_vec();
            match expected.last_mut() {
                Some(last) => *last = self.input_dim(),
                None => expected.push(self.input_dim()),
            }
            return Err(Error::Dimension {
                expected,
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Evaluates the network on `[in]` or `[batch, in]` input without recording a tape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = kernels::linear(&h, &layer.weight, &layer.bias);
            if i < last {
                for v in h.data_mut() {
                    *v = v.tanh();
                }
            }
        }
        Ok(h)
    }

    pub fn forward_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Tensor::vector(x.to_vec()))?.into_data())
    }

    /// Registers the weights on `tape` as leaves.
    pub fn bind(&self, tape: &mut Tape) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect();
        MlpVars {
            input_dim: self.input_dim(),
            layers,
        }
    }
}

/// An [`Mlp`]'s weights as tape leaves.
#[derive(Clone, Debug)]
pub struct MlpVars {
    input_dim: usize,
    layers: Vec<(Var, Var)>,
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xv = tape.value(x);
        if xv.last_dim() != self.input_dim || xv.is_empty() {
            return Err(Error::Dimension {
                expected: vec![self.input_dim],
                got: xv.shape().to_vec(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.linear(h, w, b);
            if i < last {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Collects the weight adjoints after [`Tape::backward`].
    pub fn gradients(&self, tape: &Tape) -> Result<Gradients> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for &(w, b) in &self.layers {
            if tape.grad(w).is_none() {
                return Err(Error::Contract(
                    "gradients requested before backward".into(),
                ));
            }
            layers.push(Layer {
                weight: tape.grad_tensor(w),
                bias: tape.grad_tensor(b),
            });
        }
        Ok(Gradients { layers })
    }
}

/// Per-layer gradients aligned with an [`Mlp`]'s weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
        }
    }

    pub fn from_flat(net: &Mlp, flat: &[f64]) -> Result<Self> {
        let mut g = Gradients::zeros_like(net);
        let mut scratch = net.clone();
        scratch.set_flat_params(flat)?;
        g.layers = scratch.layers;
        Ok(g)
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n.is_finite() {
            let s = max_norm / n;
            for l in &mut self.layers {
                for v in l.weight.data_mut().iter_mut().chain(l.bias.data_mut()) {
                    *v *= s;
                }
            }
        }
    }
}
