use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::MdpSpec;
use crate::error::{Error, Result};
use crate::numkit::{kernels, Mlp, MlpCheckpoint, MlpVars, Tape, Tensor, Var};
use crate::rng::Rng;

/// Softmax policy over an MLP's logits, `π(a|s) = softmax(net(s) / temperature)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    pub temperature: f64,
}

impl Policy {
    pub fn new(net: Mlp, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Contract(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Policy { net, temperature })
    }

    /// Fresh network `[state_dim, hidden.., action_count]`.
    pub fn init(spec: MdpSpec, hidden: &[usize], temperature: f64, seed: u64) -> Result<Self> {
        let mut dims = vec![spec.state_dim];
        dims.extend_from_slice(hidden);
        dims.push(spec.action_count);
        Policy::new(Mlp::new(&dims, seed)?, temperature)
    }

    /// All-zero network: the uniform random policy.
    pub fn uniform(spec: MdpSpec) -> Result<Self> {
        Policy::new(Mlp::zeros(&[spec.state_dim, spec.action_count])?, 1.0)
    }

    pub fn action_count(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.net.forward_row(state)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training {
                layer: self.net.layers().len() - 1,
                message: "non-finite policy logits".into(),
            });
        }
        if self.temperature != 1.0 {
            for v in &mut z {
                *v /= self.temperature;
            }
        }
        Ok(z)
    }

    pub fn log_probs(&self, state: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(state)?;
        let lse = kernels::log_sum_exp(&z);
        Ok(z.iter().map(|v| v - lse).collect())
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(kernels::softmax(&self.logits(state)?))
    }

    pub fn log_prob(&self, state: &[f64], action: usize) -> Result<f64> {
        self.log_probs(state)?
            .get(action)
            .copied()
            .ok_or_else(|| Error::Contract(format!("action {action} out of range")))
    }

    /// Arg-max action; ties go to the lowest index.
    pub fn greedy_action(&self, state: &[f64]) -> Result<(usize, f64)> {
        let lp = self.log_probs(state)?;
        let mut best = 0;
        for (i, v) in lp.iter().enumerate() {
            if *v > lp[best] {
                best = i;
            }
        }
        Ok((best, lp[best]))
    }

    /// Inverse-CDF draw from `π(·|s)`; returns the action and its log-probability.
    pub fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<(usize, f64)> {
        let lp = self.log_probs(state)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, v) in lp.iter().enumerate() {
            acc += v.exp();
            if u < acc {
                chosen = Some(i);
                break;
            }
        }
        // rounding can leave acc slightly below 1; fall back to the last
        // action with non-zero mass
        let a = chosen.unwrap_or_else(|| {
            lp.iter()
                .rposition(|v| v.exp() > 0.0)
                .unwrap_or(lp.len() - 1)
        });
        Ok((a, lp[a]))
    }

    /// Row-wise `log π(·|s)` for a batch of states, recorded on `tape`.
    pub fn graph_log_probs(&self, tape: &mut Tape, vars: &MlpVars, states: &[Vec<f64>]) -> Result<Var> {
        let x = tape.leaf(Tensor::from_rows(states)?);
        let mut z = vars.forward(tape, x)?;
        if self.temperature != 1.0 {
            z = tape.scale(z, 1.0 / self.temperature);
        }
        Ok(tape.log_softmax(z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCheckpoint {
    pub config_hash: String,
    pub temperature: f64,
    pub net: MlpCheckpoint,
}

impl PolicyCheckpoint {
    pub fn new(policy: &Policy, seed: u64, config_hash: &str) -> Self {
        PolicyCheckpoint {
            config_hash: config_hash.to_string(),
            temperature: policy.temperature,
            net: MlpCheckpoint::from_mlp(&policy.net, seed),
        }
    }

    pub fn to_policy(&self) -> Result<Policy> {
        Policy::new(self.net.to_mlp()?, self.temperature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Layer;
    use crate::rng::rng_from_seed;

    fn bias_policy(bias: Vec<f64>) -> Policy {
        let k = bias.len();
        let net = Mlp::from_layers(vec![Layer {
            weight: Tensor::zeros(&[k, 2]),
            bias: Tensor::vector(bias),
        }])
        .unwrap();
        Policy::new(net, 1.0).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let p = Policy::init(MdpSpec::new(6, 5, 0.9).unwrap(), &[8], 1.0, 3).unwrap();
        let probs = p.probabilities(&[0.1, 0.5, -0.2, 1.0, 0.0, 0.3]).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let p = bias_policy(vec![0.0, 1.0, 1.0, 0.5]);
        assert_eq!(p.greedy_action(&[0.0, 0.0]).unwrap().0, 1);
    }

    #[test]
    fn non_finite_logits_are_training_errors() {
        let p = bias_policy(vec![0.0, f64::NAN]);
        assert!(matches!(p.logits(&[0.0, 0.0]), Err(Error::Training { .. })));
        assert!(p.sample_action(&[0.0, 0.0], &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn sampling_frequencies_follow_probabilities() {
        let p = bias_policy(vec![0.0, 2f64.ln(), 0.0]); // probs 1/4, 1/2, 1/4
        let mut rng = rng_from_seed(9);
        let mut counts = [0usize; 3];
        for _ in 0..40_000 {
            counts[p.sample_action(&[0.0, 0.0], &mut rng).unwrap().0] += 1;
        }
        let f1 = counts[1] as f64 / 40_000.0;
        assert!((f1 - 0.5).abs() < 0.015, "{counts:?}");
    }

    #[test]
    fn temperature_scales_logits() {
        let mut p = bias_policy(vec![0.0, 2.0]);
        p.temperature = 2.0;
        assert_eq!(p.logits(&[0.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert!(Policy::new(p.net.clone(), 0.0).is_err());
    }
}
