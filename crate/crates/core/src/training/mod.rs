//! Rollouts, advantage estimation, PPO, and the three training procedures:
//! RL² meta-training of the right hemisphere, from-scratch training of the
//! left-only baseline, and bi-hemispheric training with the frozen right
//! hemisphere.
//!
//! Everything runs on one thread and is bit-deterministic for a fixed
//! random generator. Episodes of a batch are stepped in lockstep so every
//! network call processes the whole batch at once.

mod config;
mod gae;
mod loops;
mod normalizer;
mod ppo;
mod rollout;

pub use config::{PpoConfig, TrialSpec};
pub use gae::compute_gae;
pub use loops::{
    evaluate_adaptation, evaluate_baseline, meta_train_rl2, sample_worlds, train_bihem,
    train_left_only, MetaRow, MetaTrainLog, MetaTrainOutput, RunSpec, TrainingLog, UpdateRow,
};
pub(crate) use loops::{read_rows, write_rows};
pub use normalizer::{normalize_reward, RewardNormalizer, NORMALIZER_EPSILON};
pub use ppo::{
    bihem_loss_graph, clipped_objective, ppo_update_bihem, ppo_update_solo, sequence_advantages,
    UpdateStats,
};
pub use rollout::{
    collect_bihem, collect_random, collect_solo, Normalization, Rollout, RolloutStats, Transition,
};
