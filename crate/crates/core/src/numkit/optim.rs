//! In-place first-order optimizers.
//!
//! `step` mutates the network in place. Gradients are validated before any
//! weight is touched, so a failed step leaves the network unchanged.

use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Contract(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Contract(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        learning_rate: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        learning_rate: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

impl OptimizerConfig {
    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { learning_rate, .. } | OptimizerConfig::Adam { learning_rate, .. } => {
                learning_rate
            }
        }
    }

    pub fn build(&self) -> Result<Optimizer> {
        match *self {
            OptimizerConfig::Sgd {
                learning_rate,
                momentum,
            } => {
                // Zero learning rate is allowed here: it is a useful no-op baseline.
                if learning_rate != 0.0 {
                    SgdConfig {
                        learning_rate,
                        momentum,
                        seed: 0,
                    }
                    .validate()?;
                }
                Ok(Optimizer::Sgd(Sgd {
                    learning_rate,
                    momentum,
                    velocity: None,
                }))
            }
            OptimizerConfig::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } => {
                if !(learning_rate >= 0.0) || !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return Err(Error::Contract(format!(
                        "invalid adam settings: lr={learning_rate} beta1={beta1} beta2={beta2}"
                    )));
                }
                Ok(Optimizer::Adam(Adam {
                    cfg: AdamConfig {
                        learning_rate,
                        beta1,
                        beta2,
                        epsilon,
                    },
                    t: 0,
                    m: None,
                    v: None,
                }))
            }
        }
    }
}

fn check_grads(net: &Mlp, grads: &Gradients) -> Result<()> {
    if grads.layers.len() != net.layers().len() {
        return Err(Error::Contract(format!(
            "gradients have {} layers, network has {}",
            grads.layers.len(),
            net.layers().len()
        )));
    }
    for (i, (g, w)) in grads.layers.iter().zip(net.layers()).enumerate() {
        if g.weight.shape() != w.weight.shape() || g.bias.shape() != w.bias.shape() {
            return Err(Error::Dimension {
                expected: w.weight.shape().to_vec(),
                got: g.weight.shape().to_vec(),
            });
        }
        if !g.weight.all_finite() || !g.bias.all_finite() {
            return Err(Error::Training {
                layer: i,
                message: "non-finite gradient".into(),
            });
        }
    }
    Ok(())
}

/// SGD with heavy-ball momentum: `v ← μ v + g`, `w ← w − lr · v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    velocity: Option<Vec<f64>>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Sgd {
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            velocity: None,
        })
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        check_grads(net, grads)?;
        let g = grads.flat();
        let v = self.velocity.get_or_insert_with(|| vec![0.0; g.len()]);
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi = self.momentum * *vi + gi;
        }
        let mut w = net.flat_params();
        for (wi, vi) in w.iter_mut().zip(v.iter()) {
            *wi -= self.learning_rate * vi;
        }
        net.set_flat_params(&w)
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Option<Vec<f64>>,
    v: Option<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: None,
            v: None,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        check_grads(net, grads)?;
        let g = grads.flat();
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        self.t += 1;
        let m = self.m.get_or_insert_with(|| vec![0.0; g.len()]);
        let v = self.v.get_or_insert_with(|| vec![0.0; g.len()]);
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut w = net.flat_params();
        for i in 0..g.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            w[i] -= learning_rate * mh / (vh.sqrt() + epsilon);
        }
        net.set_flat_params(&w)
    }
}

#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(net, grads),
            Optimizer::Adam(o) => o.step(net, grads),
        }
    }
}
