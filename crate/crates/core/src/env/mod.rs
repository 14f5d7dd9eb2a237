//! Markov decision processes: a navigation gridworld and a synthetic
//! token-generation task scored by ROUGE.

mod gridworld;
pub mod rouge;
mod tokens;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gridworld::{Cell, GridWorld, GridWorldConfig, GRID_ACTIONS};
pub use tokens::{TokenEntry, TokenEnvConfig, TokenGenEnv, Vocabulary, DEFAULT_TAGS, END_TOKEN};

/// Shape of an MDP `(S, A, T, r, γ, ρ)`; the dynamics, reward and start
/// distribution live on the concrete environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub state_dim: usize,
    pub action_count: usize,
    pub gamma: f64,
}

impl MdpSpec {
    pub fn new(state_dim: usize, action_count: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Contract(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if action_count < 2 {
            return Err(Error::Contract(format!(
                "an MDP needs at least two actions, got {action_count}"
            )));
        }
        if state_dim == 0 {
            return Err(Error::Contract("state_dim must be positive".into()));
        }
        Ok(MdpSpec {
            state_dim,
            action_count,
            gamma,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Human-readable label of an action: the emitted word and its tag in the
/// token task, the move direction in the gridworld.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenInfo {
    pub surface: String,
    pub tag: String,
}

pub trait Environment: Clone + Send + Sync {
    fn spec(&self) -> MdpSpec;

    fn max_steps(&self) -> usize;

    /// Draws a start state from the initial distribution; deterministic in `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<Transition>;

    fn is_done(&self) -> bool;

    fn annotate(&self, action: usize) -> Option<TokenInfo>;

    /// Episode input, `y^in` (article token ids, or the start cell index).
    fn episode_input(&self) -> Vec<usize>;

    /// Ground-truth output `y^G` for the current episode, empty when the task has none.
    fn episode_reference(&self) -> Vec<usize>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Gridworld(GridWorldConfig),
    Tokens(TokenEnvConfig),
}

impl EnvConfig {
    pub fn gamma(&self) -> f64 {
        match self {
            EnvConfig::Gridworld(c) => c.gamma,
            EnvConfig::Tokens(c) => c.gamma,
        }
    }

    pub fn build(&self) -> Result<AnyEnv> {
        Ok(match self {
            EnvConfig::Gridworld(c) => AnyEnv::Grid(GridWorld::new(c.clone())?),
            EnvConfig::Tokens(c) => AnyEnv::Tokens(TokenGenEnv::new(c.clone())?),
        })
    }
}

/// Either environment behind one type, for config-driven pipelines.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    Grid(GridWorld),
    Tokens(TokenGenEnv),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Grid($e) => $body,
            AnyEnv::Tokens($e) => $body,
        }
    };
}

impl AnyEnv {
    /// Every `(surface, tag)` annotation the environment can emit.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        match self {
            AnyEnv::Tokens(e) => Ok(e.vocab().clone()),
            AnyEnv::Grid(e) => Vocabulary::new(
                (0..e.spec().action_count)
                    .filter_map(|a| e.annotate(a))
                    .map(|i| TokenEntry {
                        surface: i.surface,
                        tag: i.tag,
                    })
                    .collect(),
            ),
        }
    }
}

impl Environment for AnyEnv {
    fn spec(&self) -> MdpSpec {
        dispatch!(self, e => e.spec())
    }
    fn max_steps(&self) -> usize {
        dispatch!(self, e => e.max_steps())
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        dispatch!(self, e => e.reset(seed))
    }
    fn step(&mut self, action: usize) -> Result<Transition> {
        dispatch!(self, e => e.step(action))
    }
    fn is_done(&self) -> bool {
        dispatch!(self, e => e.is_done())
    }
    fn annotate(&self, action: usize) -> Option<TokenInfo> {
        dispatch!(self, e => e.annotate(action))
    }
    fn episode_input(&self) -> Vec<usize> {
        dispatch!(self, e => e.episode_input())
    }
    fn episode_reference(&self) -> Vec<usize> {
        dispatch!(self, e => e.episode_reference())
    }
}
