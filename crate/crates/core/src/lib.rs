//! Bi-hemispheric reinforcement-learning agents.
//!
//! A frozen, meta-trained generalist network (the *right hemisphere*) and a
//! trainable specialist (the *left hemisphere*) are blended by a recurrent
//! gating network. The crate contains everything needed to train and
//! evaluate that agent from scratch:
//!
//! - [`autodiff`]: reverse-mode differentiation, GRU cells, Adam, checkpoints
//! - [`envs`]: the tiered 2D PointWorld task suite
//! - [`agent`]: hemisphere and gating networks and the blending algebra
//! - [`training`]: rollouts, GAE, PPO, RL² meta-training, bi-hemispheric training
//! - [`metrics`]: initial/final relative reward and smoothing utilities
//! - [`expcli`]: the experiment runner behind the `bihem` binary

pub mod agent;
pub mod autodiff;
pub mod envs;
pub mod error;
pub mod expcli;
pub mod metrics;
pub mod seeding;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod book_autodiff {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/environments.md")]
pub mod book_environments {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/agent.md")]
pub mod book_agent {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/training.md")]
pub mod book_training {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod book_metrics {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod book_experiments {}
