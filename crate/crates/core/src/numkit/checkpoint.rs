//! JSON checkpoints. Floats are written in shortest round-trip form and parsed
//! with exact rounding, so save → load reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::mlp::{Layer, Mlp};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpCheckpoint {
    pub layer_dims: Vec<usize>,
    /// Flat row-major arrays, `[W0, b0, W1, b1, ...]`.
    pub weights: Vec<Vec<f64>>,
    pub seed: u64,
}

impl MlpCheckpoint {
    pub fn from_mlp(net: &Mlp, seed: u64) -> Self {
        let weights = net
            .layers()
            .iter()
            .flat_map(|l| [l.weight.data().to_vec(), l.bias.data().to_vec()])
            .collect();
        MlpCheckpoint {
            layer_dims: net.layer_dims().to_vec(),
            weights,
            seed,
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let dims = &self.layer_dims;
        if dims.len() < 2 || self.weights.len() != 2 * (dims.len() - 1) {
            return Err(Error::Data(format!(
                "checkpoint with layer_dims {dims:?} holds {} weight arrays",
                self.weights.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(self.weights.chunks(2))
            .map(|(d, w)| {
                Ok(Layer {
                    weight: Tensor::new(vec![d[1], d[0]], w[0].clone())?,
                    bias: Tensor::new(vec![d[1]], w[1].clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers)
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
