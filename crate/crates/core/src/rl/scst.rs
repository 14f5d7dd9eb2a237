//! Self-critical sequence training.
//!
//! For an input `y^in` the policy produces a sampled sequence `y^s` and a
//! greedy sequence `y^g`. With `R` the sequence-level reward, the loss is
//!
//! ```text
//! L = (R(y^g) − R(y^s)) · Σ_t log P^t(y^s_t | y^s_1..t−1, y^in)
//! ```
//!
//! The reward difference is a constant factor, so gradients flow only through
//! the log-probabilities. Descending `L` raises the likelihood of `y^s` when
//! it beats the greedy baseline (`R(y^s) > R(y^g)`) and lowers it otherwise.

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::numkit::{Gradients, OptimizerConfig, Tape, Tensor};
use crate::rng::derive_seed;

use super::policy::Policy;
use super::rollout::{evaluate, greedy_sequence, sample_sequence, Decoding, Rollout};

const TRAIN_STREAM: u64 = 0x7a11;

/// `y^s` with its log-probabilities, `y^g`, the reference `y^G` and input `y^in`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodePair {
    pub input: Vec<usize>,
    pub sampled: Rollout,
    pub greedy: Vec<usize>,
    pub greedy_reward: f64,
    pub reference: Vec<usize>,
}

impl EpisodePair {
    /// Runs the sampled and greedy decodings on the same episode input.
    pub fn collect<E: Environment>(policy: &Policy, env: &mut E, seed: u64) -> Result<Self> {
        let greedy = greedy_sequence(policy, env, seed)?;
        let sampled = sample_sequence(policy, env, seed)?;
        Ok(EpisodePair {
            input: sampled.input.clone(),
            reference: sampled.reference.clone(),
            greedy_reward: greedy.total_reward(),
            greedy: greedy.actions,
            sampled,
        })
    }

    pub fn sampled_actions(&self) -> &[usize] {
        &self.sampled.actions
    }
}

/// `(R(y^g) − R(y^s)) · Σ_t log P^t(y^s_t)` for a reward function over action sequences.
pub fn self_critical_loss(pair: &EpisodePair, reward: impl Fn(&[usize]) -> f64) -> f64 {
    let factor = reward(&pair.greedy) - reward(&pair.sampled.actions);
    factor * pair.sampled.log_probs.iter().sum::<f64>()
}

/// One sequence's contribution to the batched objective.
#[derive(Clone, Debug)]
pub struct ScstItem<'a> {
    pub states: &'a [Vec<f64>],
    pub actions: &'a [usize],
    /// `R(y^g) − R(y^s)`.
    pub factor: f64,
}

/// Batched self-critical objective and its gradient:
/// `(1/B) Σ_b factor_b Σ_t log π(a_t|s_t) − entropy_coef · mean_t H(π(·|s_t))`.
pub fn scst_objective(policy: &Policy, batch: &[ScstItem<'_>], entropy_coef: f64) -> Result<(f64, Gradients)> {
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut weights = Vec::new();
    for item in batch {
        if item.states.len() != item.actions.len() {
            return Err(Error::Contract("one state per action required".into()));
        }
        states.extend(item.states.iter().cloned());
        actions.extend_from_slice(item.actions);
        weights.extend(std::iter::repeat(item.factor / batch.len() as f64).take(item.actions.len()));
    }
    weighted_log_prob_objective(policy, &states, &actions, &weights, entropy_coef)
}

/// `Σ_t w_t log π(a_t|s_t) − entropy_coef · mean_t H(π(·|s_t))` and its gradient.
pub fn weighted_log_prob_objective(
    policy: &Policy,
    states: &[Vec<f64>],
    actions: &[usize],
    weights: &[f64],
    entropy_coef: f64,
) -> Result<(f64, Gradients)> {
    let steps = actions.len();
    if steps == 0 {
        return Err(Error::Contract("policy-gradient batch has no steps".into()));
    }
    if states.len() != steps || weights.len() != steps {
        return Err(Error::Contract("states, actions and weights must align".into()));
    }
    let mut tape = Tape::new();
    let vars = policy.net.bind(&mut tape);
    let log_probs = policy.graph_log_probs(&mut tape, &vars, states)?;
    let picked = tape.gather(log_probs, actions);
    let w = tape.leaf(Tensor::vector(weights.to_vec()));
    let weighted = tape.mul(picked, w);
    let mut loss = tape.sum(weighted);
    if entropy_coef != 0.0 {
        // Σ p log p = −H, averaged over steps
        let p = tape.exp(log_probs);
        let plogp = tape.mul(p, log_probs);
        let neg_entropy = tape.sum(plogp);
        let scaled = tape.scale(neg_entropy, entropy_coef / steps as f64);
        loss = tape.add(loss, scaled);
    }
    let value = tape.scalar(loss);
    tape.backward(loss)?;
    Ok((value, vars.gradients(&tape)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub optimizer: OptimizerConfig,
    pub entropy_coef: f64,
    pub temperature: f64,
    pub grad_clip: Option<f64>,
    /// Set by the caller; configuration files seed the whole pipeline instead.
    #[serde(skip)]
    pub seed: u64,
    /// Episodes used for the greedy evaluation logged every `eval_every` iterations.
    pub eval_episodes: usize,
    pub eval_every: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            hidden: vec![64],
            iterations: 500,
            episodes_per_iteration: 16,
            optimizer: OptimizerConfig::Adam {
                learning_rate: 3e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            entropy_coef: 0.01,
            temperature: 1.0,
            grad_clip: Some(5.0),
            seed: 0,
            eval_episodes: 32,
            eval_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertCurveRow {
    pub iteration: usize,
    pub loss: f64,
    pub mean_sampled_reward: f64,
    pub mean_greedy_reward: f64,
    /// Greedy evaluation on held-out episodes, when computed this iteration.
    pub eval_reward: Option<f64>,
}

/// Trains `π*` from the initialization `Policy::init(spec, hidden, temperature, seed)`.
///
/// Rows are appended to `curve` as training proceeds, so the record survives
/// a divergence error.
pub fn train_expert<E: Environment>(env: &E, cfg: &ExpertConfig, curve: &mut Vec<ExpertCurveRow>) -> Result<Policy> {
    let mut policy = Policy::init(env.spec(), &cfg.hidden, cfg.temperature, derive_seed(cfg.seed, TRAIN_STREAM, u64::MAX))?;
    if cfg.episodes_per_iteration == 0 {
        return Err(Error::Contract("episodes_per_iteration must be positive".into()));
    }
    let mut opt = cfg.optimizer.build()?;
    let mut env = env.clone();
    for it in 0..cfg.iterations {
        let pairs = (0..cfg.episodes_per_iteration)
            .map(|b| {
                let seed = derive_seed(cfg.seed, TRAIN_STREAM, (it * cfg.episodes_per_iteration + b) as u64);
                EpisodePair::collect(&policy, &mut env, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let items: Vec<ScstItem<'_>> = pairs
            .iter()
            .map(|p| ScstItem {
                states: &p.sampled.states,
                actions: &p.sampled.actions,
                factor: p.greedy_reward - p.sampled.total_reward(),
            })
            .collect();
        let (loss, mut grads) = scst_objective(&policy, &items, cfg.entropy_coef)?;
        let n = pairs.len() as f64;
        let mut row = ExpertCurveRow {
            iteration: it,
            loss,
            mean_sampled_reward: pairs.iter().map(|p| p.sampled.total_reward()).sum::<f64>() / n,
            mean_greedy_reward: pairs.iter().map(|p| p.greedy_reward).sum::<f64>() / n,
            eval_reward: None,
        };
        if !loss.is_finite() {
            curve.push(row);
            return Err(Error::Divergence {
                iteration: it,
                message: format!("non-finite self-critical loss {loss}"),
            });
        }
        if let Some(c) = cfg.grad_clip {
            grads.clip_norm(c);
        }
        opt.step(&mut policy.net, &grads)?;
        if cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0 {
            row.eval_reward = Some(evaluate(&policy, &env, cfg.eval_episodes, derive_seed(cfg.seed, 0xe7a1, 0), Decoding::Greedy)?);
        }
        curve.push(row);
    }
    Ok(policy)
}

/// Initialization `train_expert` starts from; equals its output for zero iterations.
pub fn expert_initialization(spec: crate::env::MdpSpec, cfg: &ExpertConfig) -> Result<Policy> {
    Policy::init(spec, &cfg.hidden, cfg.temperature, derive_seed(cfg.seed, TRAIN_STREAM, u64::MAX))
}
