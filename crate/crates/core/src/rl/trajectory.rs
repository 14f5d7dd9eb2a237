//! Trajectory records and their line-delimited JSON file format.
//!
//! One trajectory per line:
//! `{"id", "steps": [{"s", "a", "s_next", "token_surface"?, "token_tag"?, ...}], "episode_reward"}`.
//! Scoring adds per-step `reward_disc` (and the comparison fields below).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::policy::Policy;
use super::rollout::{rollout, Decoding, Rollout};

const COLLECT_STREAM: u64 = 0xc011;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub s: Vec<f64>,
    pub a: usize,
    pub s_next: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_surface: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_tag: Option<String>,
    /// Discriminator reward under the configured scoring policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_disc: Option<f64>,
    /// Discriminator reward under the other scoring policy, for comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_disc_alt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_pi_novice: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_pi_expert: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub id: usize,
    pub steps: Vec<Step>,
    pub episode_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Trajectory {
    pub fn from_rollout(id: usize, r: &Rollout) -> Self {
        let steps = (0..r.len())
            .map(|t| {
                let info = r.annotations[t].as_ref();
                Step {
                    s: r.states[t].clone(),
                    a: r.actions[t],
                    s_next: r.next_states[t].clone(),
                    token_surface: info.map(|i| i.surface.clone()),
                    token_tag: info.map(|i| i.tag.clone()),
                    reward_disc: None,
                    reward_disc_alt: None,
                    log_pi_novice: None,
                    log_pi_expert: None,
                }
            })
            .collect();
        Trajectory {
            id,
            steps,
            episode_reward: r.total_reward(),
            config_hash: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `D = {τ_1, …, τ_N}`: `count` episodes in `(s, a, s')` form.
///
/// Episodes run in parallel; episode `i` uses a seed derived from `(seed, i)`,
/// so the result does not depend on scheduling.
pub fn collect_trajectories<E: Environment>(
    policy: &Policy,
    env: &E,
    count: usize,
    seed: u64,
    decoding: Decoding,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::Contract("collect_trajectories needs count ≥ 1".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut env = env.clone();
            let r = rollout(policy, &mut env, episode_seed(seed, i), decoding)?;
            Ok(Trajectory::from_rollout(i, &r))
        })
        .collect()
}

/// Environment seed used for episode `i` by [`collect_trajectories`].
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, COLLECT_STREAM, i as u64)
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut buf = Vec::new();
    for t in trajectories {
        serde_json::to_writer(&mut buf, t).map_err(|e| Error::json(path, e))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a trajectory file; malformed lines are reported with their 1-based number.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories(&text).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}:{msg}", path.display())),
        other => other,
    })
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let t: Trajectory = serde_json::from_str(line)
                .map_err(|e| Error::Data(format!("line {}: {e}", n + 1)))?;
            if t.steps.iter().any(|s| s.s.len() != s.s_next.len()) {
                return Err(Error::Data(format!(
                    "line {}: state and next-state widths differ",
                    n + 1
                )));
            }
            Ok(t)
        })
        .collect()
}
