use std::collections::{BTreeSet, VecDeque};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Environment, MdpSpec, TokenInfo, Transition};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// `(x, y)`, with `y` growing downwards.
pub type Cell = [usize; 2];

/// Action order: up, down, left, right.
pub const GRID_ACTIONS: [&str; 4] = ["up", "down", "left", "right"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridWorldConfig {
    pub width: usize,
    pub height: usize,
    pub goal: Cell,
    pub walls: Vec<Cell>,
    /// Start cells, drawn uniformly. Empty means every free non-goal cell.
    pub starts: Vec<Cell>,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub max_steps: usize,
    pub gamma: f64,
}

impl Default for GridWorldConfig {
    fn default() -> Self {
        GridWorldConfig {
            width: 5,
            height: 5,
            goal: [4, 4],
            walls: vec![[1, 1], [2, 1], [3, 3]],
            starts: Vec::new(),
            step_penalty: -0.01,
            goal_reward: 1.0,
            max_steps: 25,
            gamma: 0.95,
        }
    }
}

/// Deterministic four-move navigation to a goal cell.
///
/// Moves off the grid or into a wall leave the agent in place and still cost
/// `step_penalty`. Reaching the goal pays `goal_reward` (instead of the
/// penalty) and ends the episode; so does running out of `max_steps`.
#[derive(Clone, Debug)]
pub struct GridWorld {
    cfg: GridWorldConfig,
    walls: BTreeSet<Cell>,
    starts: Vec<Cell>,
    spec: MdpSpec,
    pos: Cell,
    start: Cell,
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(cfg: GridWorldConfig) -> Result<Self> {
        if cfg.width == 0 || cfg.height == 0 || cfg.max_steps == 0 {
            return Err(Error::Contract("gridworld sizes and max_steps must be positive".into()));
        }
        let inside = |c: &Cell| c[0] < cfg.width && c[1] < cfg.height;
        let walls: BTreeSet<Cell> = cfg.walls.iter().copied().collect();
        if !inside(&cfg.goal) || walls.contains(&cfg.goal) {
            return Err(Error::Contract(format!("goal {:?} must be a free cell", cfg.goal)));
        }
        if let Some(w) = walls.iter().find(|c| !inside(c)) {
            return Err(Error::Contract(format!("wall {w:?} lies outside the grid")));
        }
        let starts: Vec<Cell> = if cfg.starts.is_empty() {
            (0..cfg.height)
                .flat_map(|y| (0..cfg.width).map(move |x| [x, y]))
                .filter(|c| !walls.contains(c) && *c != cfg.goal)
                .collect()
        } else {
            cfg.starts.clone()
        };
        if starts.is_empty() {
            return Err(Error::Contract("gridworld has no start cell".into()));
        }
        if let Some(s) = starts.iter().find(|c| !inside(c) || walls.contains(*c)) {
            return Err(Error::Contract(format!("start {s:?} must be a free cell")));
        }
        let spec = MdpSpec::new(cfg.width * cfg.height, GRID_ACTIONS.len(), cfg.gamma)?;
        let first = starts[0];
        Ok(GridWorld {
            cfg,
            walls,
            starts,
            spec,
            pos: first,
            start: first,
            steps: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &GridWorldConfig {
        &self.cfg
    }

    pub fn starts(&self) -> &[Cell] {
        &self.starts
    }

    pub fn position(&self) -> Cell {
        self.pos
    }

    pub fn cell_index(&self, c: Cell) -> usize {
        c[1] * self.cfg.width + c[0]
    }

    pub fn features(&self, c: Cell) -> Vec<f64> {
        let mut v = vec![0.0; self.spec.state_dim];
        v[self.cell_index(c)] = 1.0;
        v
    }

    /// Starts an episode at a specific cell.
    pub fn reset_to(&mut self, c: Cell) -> Result<Vec<f64>> {
        if self.walls.contains(&c) || c[0] >= self.cfg.width || c[1] >= self.cfg.height {
            return Err(Error::Contract(format!("cannot start in {c:?}")));
        }
        self.pos = c;
        self.start = c;
        self.steps = 0;
        self.done = c == self.cfg.goal;
        Ok(self.features(c))
    }

    pub fn next_cell(&self, c: Cell, action: usize) -> Cell {
        let [x, y] = c;
        let target = match action {
            0 if y > 0 => [x, y - 1],
            1 if y + 1 < self.cfg.height => [x, y + 1],
            2 if x > 0 => [x - 1, y],
            3 if x + 1 < self.cfg.width => [x + 1, y],
            _ => c,
        };
        if self.walls.contains(&target) {
            c
        } else {
            target
        }
    }

    /// Shortest move count from `c` to the goal, by breadth-first search.
    pub fn distance_to_goal(&self, c: Cell) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.spec.state_dim];
        let mut queue = VecDeque::from([c]);
        dist[self.cell_index(c)] = 0;
        while let Some(cur) = queue.pop_front() {
            let d = dist[self.cell_index(cur)];
            if cur == self.cfg.goal {
                return Some(d);
            }
            for a in 0..GRID_ACTIONS.len() {
                let n = self.next_cell(cur, a);
                let i = self.cell_index(n);
                if dist[i] == usize::MAX {
                    dist[i] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Best achievable undiscounted return from `c`: walk a shortest path,
    /// or pay the step penalty until time runs out if the goal is too far.
    pub fn optimal_return(&self, c: Cell) -> f64 {
        let cfg = &self.cfg;
        let timeout = cfg.max_steps as f64 * cfg.step_penalty;
        match self.distance_to_goal(c) {
            Some(0) => 0.0,
            Some(d) if d <= cfg.max_steps => {
                ((d - 1) as f64 * cfg.step_penalty + cfg.goal_reward).max(timeout)
            }
            _ => timeout,
        }
    }

    /// [`optimal_return`](Self::optimal_return) averaged over the start distribution.
    pub fn optimal_mean_return(&self) -> f64 {
        self.starts.iter().map(|&c| self.optimal_return(c)).sum::<f64>() / self.starts.len() as f64
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> MdpSpec {
        self.spec
    }

    fn max_steps(&self) -> usize {
        self.cfg.max_steps
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let c = if self.starts.len() == 1 {
            self.starts[0]
        } else {
            self.starts[rng_from_seed(seed).gen_range(0..self.starts.len())]
        };
        self.reset_to(c).expect("start cells are validated")
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        if action >= GRID_ACTIONS.len() {
            return Err(Error::Contract(format!("action {action} out of range 0..4")));
        }
        let state = self.features(self.pos);
        self.pos = self.next_cell(self.pos, action);
        self.steps += 1;
        let at_goal = self.pos == self.cfg.goal;
        let reward = if at_goal {
            self.cfg.goal_reward
        } else {
            self.cfg.step_penalty
        };
        self.done = at_goal || self.steps >= self.cfg.max_steps;
        Ok(Transition {
            state,
            action,
            next_state: self.features(self.pos),
            reward,
            done: self.done,
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn annotate(&self, action: usize) -> Option<TokenInfo> {
        GRID_ACTIONS.get(action).map(|name| TokenInfo {
            surface: name.to_string(),
            tag: name.to_uppercase(),
        })
    }

    fn episode_input(&self) -> Vec<usize> {
        vec![self.cell_index(self.start)]
    }

    fn episode_reference(&self) -> Vec<usize> {
        Vec::new()
    }
}
