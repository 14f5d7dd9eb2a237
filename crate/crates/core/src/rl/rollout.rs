use serde::{Deserialize, Serialize};

use crate::env::{Environment, TokenInfo};
use crate::error::Result;
use crate::rng::{derive_seed, rng_from_seed};

use super::policy::Policy;

const ACTION_STREAM: u64 = 0x5a3e;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    Greedy,
    Sample,
}

/// One episode: per-step states, actions, log-probabilities and rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub next_states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub annotations: Vec<Option<TokenInfo>>,
    /// `y^in`: the episode input the environment was reset to.
    pub input: Vec<usize>,
    /// `y^G`: the environment's reference output, if any.
    pub reference: Vec<usize>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
    }
}

/// Runs one episode from `env.reset(seed)`.
///
/// Sampling draws actions from a stream derived from `seed`, so the same seed
/// gives the same episode input under both decodings.
pub fn rollout<E: Environment>(policy: &Policy, env: &mut E, seed: u64, decoding: Decoding) -> Result<Rollout> {
    let mut state = env.reset(seed);
    let mut rng = rng_from_seed(derive_seed(seed, ACTION_STREAM, 0));
    let mut out = Rollout {
        states: Vec::new(),
        next_states: Vec::new(),
        actions: Vec::new(),
        log_probs: Vec::new(),
        rewards: Vec::new(),
        annotations: Vec::new(),
        input: env.episode_input(),
        reference: env.episode_reference(),
    };
    while !env.is_done() {
        let (action, log_prob) = match decoding {
            Decoding::Greedy => policy.greedy_action(&state)?,
            Decoding::Sample => policy.sample_action(&state, &mut rng)?,
        };
        let annotation = env.annotate(action);
        let t = env.step(action)?;
        out.states.push(t.state);
        out.next_states.push(t.next_state.clone());
        out.actions.push(action);
        out.log_probs.push(log_prob);
        out.rewards.push(t.reward);
        out.annotations.push(annotation);
        state = t.next_state;
    }
    Ok(out)
}

/// `y^s`: actions sampled from `π(·|s)` with their log-probabilities.
pub fn sample_sequence<E: Environment>(policy: &Policy, env: &mut E, seed: u64) -> Result<Rollout> {
    rollout(policy, env, seed, Decoding::Sample)
}

/// `y^g`: arg-max actions, lowest index on ties.
pub fn greedy_sequence<E: Environment>(policy: &Policy, env: &mut E, seed: u64) -> Result<Rollout> {
    rollout(policy, env, seed, Decoding::Greedy)
}

/// Mean undiscounted return over `episodes` episodes with derived seeds.
pub fn evaluate<E: Environment>(
    policy: &Policy,
    env: &E,
    episodes: usize,
    seed: u64,
    decoding: Decoding,
) -> Result<f64> {
    let mut env = env.clone();
    let mut total = 0.0;
    for i in 0..episodes {
        total += rollout(policy, &mut env, derive_seed(seed, 0xe7a1, i as u64), decoding)?.total_reward();
    }
    Ok(total / episodes.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GridWorld, GridWorldConfig, TokenEnvConfig, TokenGenEnv};
    use crate::numkit::{Layer, Mlp, Tensor};

    fn dominant(spec_dim: usize, k: usize, winner: usize, margin: f64) -> Policy {
        let mut bias = vec![0.0; k];
        bias[winner] = margin;
        let net = Mlp::from_layers(vec![Layer {
            weight: Tensor::zeros(&[k, spec_dim]),
            bias: Tensor::vector(bias),
        }])
        .unwrap();
        Policy::new(net, 1.0).unwrap()
    }

    #[test]
    fn uniform_policy_log_probs() {
        let mut env = GridWorld::new(GridWorldConfig::default()).unwrap();
        let p = Policy::uniform(env.spec()).unwrap();
        let r = sample_sequence(&p, &mut env, 4).unwrap();
        assert!(r.log_probs.iter().all(|lp| (lp - 0.25f64.ln()).abs() < 1e-15));
        assert_eq!(r.log_probs.len(), r.actions.len());
    }

    #[test]
    fn dominant_logit_sample_equals_greedy() {
        let mut env = TokenGenEnv::new(TokenEnvConfig::default()).unwrap();
        let spec = env.spec();
        let p = dominant(spec.state_dim, spec.action_count, 7, 1e3);
        let s = sample_sequence(&p, &mut env, 11).unwrap();
        let g = greedy_sequence(&p, &mut env, 11).unwrap();
        assert_eq!(s.actions, g.actions);
        assert!(g.actions.iter().all(|a| *a == 7));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut env = TokenGenEnv::new(TokenEnvConfig::default()).unwrap();
        let p = Policy::init(env.spec(), &[16], 1.0, 2).unwrap();
        let a = sample_sequence(&p, &mut env, 99).unwrap();
        let b = sample_sequence(&p, &mut env, 99).unwrap();
        assert_eq!(a, b);
        let g1 = greedy_sequence(&p, &mut env, 5).unwrap();
        let g2 = greedy_sequence(&p, &mut env, 5).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn tied_logits_choose_action_zero() {
        let mut env = GridWorld::new(GridWorldConfig::default()).unwrap();
        let p = Policy::uniform(env.spec()).unwrap();
        let g = greedy_sequence(&p, &mut env, 0).unwrap();
        assert!(g.actions.iter().all(|a| *a == 0));
        assert_eq!(g.len(), env.max_steps());
    }

    #[test]
    fn discounted_return() {
        let r = Rollout {
            states: vec![],
            next_states: vec![],
            actions: vec![0, 0, 0],
            log_probs: vec![0.0; 3],
            rewards: vec![1.0, 0.0, 2.0],
            annotations: vec![None; 3],
            input: vec![],
            reference: vec![],
        };
        assert_eq!(r.total_reward(), 3.0);
        assert!((r.discounted_return(0.5) - 1.5).abs() < 1e-15);
    }
}
