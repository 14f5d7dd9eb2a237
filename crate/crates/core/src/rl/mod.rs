//! Expert training by self-critical policy gradient, rollouts and trajectory files.

mod policy;
mod rollout;
mod scst;
mod trajectory;

pub use policy::{Policy, PolicyCheckpoint};
pub use rollout::{evaluate, greedy_sequence, rollout, sample_sequence, Decoding, Rollout};
pub use scst::{
    expert_initialization, scst_objective, self_critical_loss, train_expert, EpisodePair, ExpertConfig,
    ExpertCurveRow, ScstItem, weighted_log_prob_objective,
};
pub use trajectory::{
    collect_trajectories, episode_seed, parse_trajectories, read_trajectories, write_trajectories, Step,
    Trajectory,
};
