//! Adversarial inverse RL: the `f = g + γh' − h` discriminator, its training
//! loop against a novice policy, and per-step reward scoring.

mod discriminator;
mod train;

pub use discriminator::{
    bce_with_logit, disc_accuracy, disc_loss, disc_loss_and_grad, disc_probability, logit_from_f, AirlBatch,
    DiscGradients, Discriminator, DiscriminatorCheckpoint, TransitionRecord,
};
pub use train::{
    fresh_novice, heldout_accuracy, initial_discriminator, log_pi_of, policy_log_probs, records_of,
    score_trajectories, score_trajectory, train_airl, AirlConfig, AirlCurveRow, AirlOutcome, NoviceSource,
    ScoringPolicy,
};
