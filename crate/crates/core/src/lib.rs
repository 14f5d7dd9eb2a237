//! Interpretability through adversarial inverse reinforcement learning.
//!
//! The crate implements a three-stage pipeline:
//!
//! 1. [`rl`]: train an expert policy with the self-critical policy-gradient
//!    loss and record its trajectories.
//! 2. [`airl`]: train a discriminator `f = g(s,a) + γ h(s') − h(s)` against a
//!    fresh novice policy that learns from the discriminator's rewards.
//! 3. [`analysis`]: score the expert's trajectories with the discriminator,
//!    softmax-normalize rewards per trajectory and aggregate them by token
//!    characteristics (per-tag averages, normalized mutual information).
//!
//! Everything runs on [`numkit`], a small f64 reverse-mode autodiff substrate.

pub mod airl;
pub mod analysis;
pub mod env;
pub mod error;
pub mod numkit;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
