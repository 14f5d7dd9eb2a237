use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::numkit::OptimizerConfig;
use crate::rl::{rollout, weighted_log_prob_objective, Decoding, Policy, Rollout, Trajectory};
use crate::rng::{derive_seed, rng_from_seed};

use super::discriminator::{
    disc_accuracy, disc_loss_and_grad, logit_from_f, AirlBatch, Discriminator, TransitionRecord,
};

const NOVICE_STREAM: u64 = 0x4e0f;
const BATCH_STREAM: u64 = 0xba7c;
const INIT_STREAM: u64 = 0x1417;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AirlConfig {
    pub iterations: usize,
    /// Novice episodes collected per iteration.
    pub novice_episodes: usize,
    /// Discriminator steps per iteration.
    pub disc_updates: usize,
    /// Novice policy-gradient steps per iteration.
    pub novice_updates: usize,
    /// Transitions per class in each discriminator minibatch.
    pub disc_batch: usize,
    pub g_hidden: Vec<usize>,
    pub h_hidden: Vec<usize>,
    pub disc_optimizer: OptimizerConfig,
    pub novice_optimizer: OptimizerConfig,
    pub novice_entropy_coef: f64,
    /// Iterations of past novice transitions kept as discriminator negatives;
    /// 0 keeps the whole history.
    pub replay_iterations: usize,
    pub grad_clip: Option<f64>,
    /// Must equal the environment's discount when given.
    pub gamma: Option<f64>,
    /// Set by the caller; configuration files seed the whole pipeline instead.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for AirlConfig {
    fn default() -> Self {
        AirlConfig {
            iterations: 300,
            novice_episodes: 16,
            disc_updates: 1,
            novice_updates: 1,
            disc_batch: 128,
            g_hidden: vec![32],
            h_hidden: vec![32],
            disc_optimizer: OptimizerConfig::Adam {
                learning_rate: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            novice_optimizer: OptimizerConfig::Adam {
                learning_rate: 3e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            novice_entropy_coef: 0.0,
            replay_iterations: 0,
            grad_clip: Some(5.0),
            gamma: None,
            seed: 0,
        }
    }
}

/// Where the "novice" rollouts come from.
#[derive(Clone, Debug)]
pub enum NoviceSource {
    /// A fresh policy trained on the discriminator's rewards.
    Learn(Policy),
    /// A frozen policy (for example the expert itself, as a control).
    Fixed(Policy),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AirlCurveRow {
    pub iteration: usize,
    pub disc_loss: f64,
    /// Accuracy on the minibatch, measured before the update.
    pub disc_accuracy: f64,
    /// Mean undiscounted environment return of this iteration's novice episodes.
    pub novice_return: f64,
    /// Mean discriminator reward over this iteration's novice steps.
    pub novice_disc_reward: f64,
}

#[derive(Clone, Debug)]
pub struct AirlOutcome {
    pub discriminator: Discriminator,
    pub novice: Policy,
}

pub fn records_of(trajectories: &[Trajectory]) -> Vec<TransitionRecord> {
    trajectories
        .iter()
        .flat_map(|t| {
            t.steps.iter().map(|s| TransitionRecord {
                s: s.s.clone(),
                a: s.a,
                s_next: s.s_next.clone(),
            })
        })
        .collect()
}

fn records_of_rollout(r: &Rollout) -> impl Iterator<Item = TransitionRecord> + '_ {
    (0..r.len()).map(move |t| TransitionRecord {
        s: r.states[t].clone(),
        a: r.actions[t],
        s_next: r.next_states[t].clone(),
    })
}

pub fn log_pi_of(policy: &Policy, records: &[TransitionRecord]) -> Result<Vec<f64>> {
    records.iter().map(|r| policy.log_prob(&r.s, r.a)).collect()
}

/// `log π(a_t|s_t)` for every step of a trajectory.
pub fn policy_log_probs(policy: &Policy, trajectory: &Trajectory) -> Result<Vec<f64>> {
    trajectory
        .steps
        .iter()
        .map(|s| policy.log_prob(&s.s, s.a))
        .collect()
}

/// Discounted reward-to-go, standardized over the whole batch.
fn standardized_returns(rewards: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for r in rewards {
        let mut g = vec![0.0; r.len()];
        let mut acc = 0.0;
        for t in (0..r.len()).rev() {
            acc = r[t] + gamma * acc;
            g[t] = acc;
        }
        out.extend(g);
    }
    let n = out.len().max(1) as f64;
    let mean = out.iter().sum::<f64>() / n;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    out.iter().map(|v| (v - mean) / std).collect()
}

fn sample_indices(rng: &mut crate::rng::Rng, len: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.gen_range(0..len)).collect()
}

/// Adversarial training of the discriminator against a novice.
///
/// Each iteration collects novice episodes, takes `disc_updates` logistic
/// regression steps on expert-vs-novice minibatches (novice negatives drawn
/// from the replay history), then, for a learning
/// novice, takes `novice_updates` policy-gradient steps on the
/// discriminator reward `f − log π`.
///
/// Rows are appended to `curve` as training proceeds, so the record survives
/// a divergence error.
pub fn train_airl<E: Environment>(
    expert_trajectories: &[Trajectory],
    env: &E,
    cfg: &AirlConfig,
    novice: NoviceSource,
    curve: &mut Vec<AirlCurveRow>,
) -> Result<AirlOutcome> {
    let expert = records_of(expert_trajectories);
    if expert.is_empty() {
        return Err(Error::Contract("expert trajectory set is empty".into()));
    }
    let spec = env.spec();
    if let Some(g) = cfg.gamma {
        if g != spec.gamma {
            return Err(Error::Contract(format!(
                "airl gamma {g} differs from the environment's {}",
                spec.gamma
            )));
        }
    }
    if expert[0].s.len() != spec.state_dim {
        return Err(Error::Dimension {
            expected: vec![spec.state_dim],
            got: vec![expert[0].s.len()],
        });
    }
    let (mut policy, learning) = match novice {
        NoviceSource::Learn(p) => (p, true),
        NoviceSource::Fixed(p) => (p, false),
    };
    if policy.net.input_dim() != spec.state_dim || policy.action_count() != spec.action_count {
        return Err(Error::Dimension {
            expected: vec![spec.state_dim, spec.action_count],
            got: vec![policy.net.input_dim(), policy.action_count()],
        });
    }
    let mut disc = initial_discriminator(env, cfg)?;
    let mut g_opt = cfg.disc_optimizer.build()?;
    let mut h_opt = cfg.disc_optimizer.build()?;
    let mut pi_opt = cfg.novice_optimizer.build()?;
    let mut batch_rng = rng_from_seed(derive_seed(cfg.seed, BATCH_STREAM, 0));
    let mut replay: VecDeque<Vec<TransitionRecord>> = VecDeque::new();
    let mut env = env.clone();

    for it in 0..cfg.iterations {
        let rollouts = (0..cfg.novice_episodes.max(1))
            .map(|i| {
                let seed = derive_seed(cfg.seed, NOVICE_STREAM, (it * cfg.novice_episodes.max(1) + i) as u64);
                rollout(&policy, &mut env, seed, Decoding::Sample)
            })
            .collect::<Result<Vec<_>>>()?;
        replay.push_back(rollouts.iter().flat_map(records_of_rollout).collect());
        while cfg.replay_iterations > 0 && replay.len() > cfg.replay_iterations {
            replay.pop_front();
        }
        let pool: Vec<&TransitionRecord> = replay.iter().flatten().collect();

        let mut row_loss = f64::NAN;
        let mut row_acc = f64::NAN;
        for k in 0..cfg.disc_updates {
            let ei = sample_indices(&mut batch_rng, expert.len(), cfg.disc_batch);
            let ni = sample_indices(&mut batch_rng, pool.len(), cfg.disc_batch);
            let batch_expert: Vec<TransitionRecord> = ei.iter().map(|&i| expert[i].clone()).collect();
            let batch_novice: Vec<TransitionRecord> = ni.iter().map(|&i| pool[i].clone()).collect();
            let batch = AirlBatch {
                expert_log_pi: log_pi_of(&policy, &batch_expert)?,
                novice_log_pi: log_pi_of(&policy, &batch_novice)?,
                expert: batch_expert,
                novice: batch_novice,
            };
            if k == 0 {
                row_acc = disc_accuracy(
                    &disc,
                    &batch.expert,
                    &batch.expert_log_pi,
                    &batch.novice,
                    &batch.novice_log_pi,
                )?;
            }
            let (loss, mut grads) = disc_loss_and_grad(&disc, &batch)?;
            if !loss.is_finite() {
                return Err(diverged(it, "discriminator loss", loss));
            }
            if k == 0 {
                row_loss = loss;
            }
            if let Some(c) = cfg.grad_clip {
                grads.g.clip_norm(c);
                grads.h.clip_norm(c);
            }
            g_opt.step(&mut disc.g, &grads.g)?;
            h_opt.step(&mut disc.h, &grads.h)?;
        }

        let mut reward_sum = 0.0;
        let mut reward_count = 0usize;
        let mut step_rewards = Vec::with_capacity(rollouts.len());
        for r in &rollouts {
            let recs: Vec<TransitionRecord> = records_of_rollout(r).collect();
            let f = disc.f_batch(&recs)?;
            let rewards = f
                .iter()
                .zip(&r.log_probs)
                .map(|(f, lp)| logit_from_f(*f, *lp))
                .collect::<Result<Vec<_>>>()?;
            reward_sum += rewards.iter().sum::<f64>();
            reward_count += rewards.len();
            step_rewards.push(rewards);
        }
        if learning {
            let advantages = standardized_returns(&step_rewards, spec.gamma);
            let states: Vec<Vec<f64>> = rollouts.iter().flat_map(|r| r.states.iter().cloned()).collect();
            let actions: Vec<usize> = rollouts.iter().flat_map(|r| r.actions.iter().copied()).collect();
            let weights: Vec<f64> = advantages.iter().map(|a| -a / actions.len() as f64).collect();
            for _ in 0..cfg.novice_updates {
                let (loss, mut grads) =
                    weighted_log_prob_objective(&policy, &states, &actions, &weights, cfg.novice_entropy_coef)?;
                if !loss.is_finite() {
                    return Err(diverged(it, "novice loss", loss));
                }
                if let Some(c) = cfg.grad_clip {
                    grads.clip_norm(c);
                }
                pi_opt.step(&mut policy.net, &grads)?;
            }
        }

        curve.push(AirlCurveRow {
            iteration: it,
            disc_loss: row_loss,
            disc_accuracy: row_acc,
            novice_return: rollouts.iter().map(|r| r.total_reward()).sum::<f64>() / rollouts.len() as f64,
            novice_disc_reward: reward_sum / reward_count.max(1) as f64,
        });
    }
    Ok(AirlOutcome {
        discriminator: disc,
        novice: policy,
    })
}

/// Discriminator `train_airl` starts from.
pub fn initial_discriminator<E: Environment>(env: &E, cfg: &AirlConfig) -> Result<Discriminator> {
    Discriminator::init(env.spec(), &cfg.g_hidden, &cfg.h_hidden, derive_seed(cfg.seed, INIT_STREAM, 0))
}

/// Fresh novice with the expert's layer widths.
pub fn fresh_novice(expert: &Policy, seed: u64) -> Result<Policy> {
    Policy::new(
        crate::numkit::Mlp::new(expert.net.layer_dims(), derive_seed(seed, INIT_STREAM, 1))?,
        expert.temperature,
    )
}

fn diverged(iteration: usize, what: &str, value: f64) -> Error {
    Error::Divergence {
        iteration,
        message: format!("non-finite {what} {value}"),
    }
}

/// Accuracy on a balanced held-out set: the first `n` transitions of each
/// side, `n` the smaller count. `log π` comes from `scoring`.
pub fn heldout_accuracy(
    disc: &Discriminator,
    scoring: &Policy,
    positives: &[Trajectory],
    negatives: &[Trajectory],
) -> Result<f64> {
    let mut pos = records_of(positives);
    let mut neg = records_of(negatives);
    let n = pos.len().min(neg.len());
    if n == 0 {
        return Err(Error::Contract("held-out set has an empty side".into()));
    }
    pos.truncate(n);
    neg.truncate(n);
    let pl = log_pi_of(scoring, &pos)?;
    let nl = log_pi_of(scoring, &neg)?;
    disc_accuracy(disc, &pos, &pl, &neg, &nl)
}

/// One discriminator reward per transition of `trajectory`.
pub fn score_trajectory(disc: &Discriminator, trajectory: &Trajectory, log_probs: &[f64]) -> Result<Vec<f64>> {
    if log_probs.len() != trajectory.steps.len() {
        return Err(Error::Contract(format!(
            "trajectory {} has {} steps but {} log-probabilities",
            trajectory.id,
            trajectory.steps.len(),
            log_probs.len()
        )));
    }
    trajectory
        .steps
        .iter()
        .zip(log_probs)
        .map(|(s, lp)| disc.airl_reward(&s.s, s.a, &s.s_next, *lp))
        .collect()
}

/// Which policy supplies `π(a|s)` in the discriminator when scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringPolicy {
    #[default]
    Novice,
    Expert,
}

impl ScoringPolicy {
    pub fn other(self) -> Self {
        match self {
            ScoringPolicy::Novice => ScoringPolicy::Expert,
            ScoringPolicy::Expert => ScoringPolicy::Novice,
        }
    }
}

/// Scores every trajectory under both scoring policies; `reward_disc` holds
/// the `primary` mode and `reward_disc_alt` the other.
pub fn score_trajectories(
    disc: &Discriminator,
    trajectories: &[Trajectory],
    novice: &Policy,
    expert: &Policy,
    primary: ScoringPolicy,
) -> Result<Vec<Trajectory>> {
    trajectories
        .iter()
        .map(|t| {
            let lp_novice = policy_log_probs(novice, t)?;
            let lp_expert = policy_log_probs(expert, t)?;
            let r_novice = score_trajectory(disc, t, &lp_novice)?;
            let r_expert = score_trajectory(disc, t, &lp_expert)?;
            let (main, alt) = match primary {
                ScoringPolicy::Novice => (r_novice, r_expert),
                ScoringPolicy::Expert => (r_expert, r_novice),
            };
            let mut out = t.clone();
            for (i, step) in out.steps.iter_mut().enumerate() {
                step.reward_disc = Some(main[i]);
                step.reward_disc_alt = Some(alt[i]);
                step.log_pi_novice = Some(lp_novice[i]);
                step.log_pi_expert = Some(lp_expert[i]);
            }
            Ok(out)
        })
        .collect()
}
