use serde::{Deserialize, Serialize};

use crate::envs::TaskName;
use crate::error::{Error, Result};

/// PPO hyperparameters. Settings without a per-task value have a
/// documented default here.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    /// Sequences (episodes, or trials under RL²) collected per update.
    pub batch_size: usize,
    pub normalize_rewards: bool,
    #[serde(default = "defaults::value_coef")]
    pub value_coef: f64,
    #[serde(default = "defaults::max_grad_norm")]
    pub max_grad_norm: f64,
    /// Whole sequences per minibatch; recurrent updates replay each one.
    #[serde(default = "defaults::minibatch_size")]
    pub minibatch_size: usize,
    #[serde(default = "defaults::yes")]
    pub normalize_advantages: bool,
    /// Treat the gates inside the composed value as constants in the value
    /// loss instead of differentiating through them.
    #[serde(default)]
    pub detach_gates_in_value: bool,
    /// Left-hemisphere-alone evaluation episodes run after every
    /// bi-hemispheric update.
    #[serde(default = "defaults::left_eval_episodes")]
    pub left_eval_episodes: usize,
}

mod defaults {
    pub fn value_coef() -> f64 {
        0.5
    }
    pub fn max_grad_norm() -> f64 {
        0.5
    }
    pub fn minibatch_size() -> usize {
        5
    }
    pub fn yes() -> bool {
        true
    }
    pub fn left_eval_episodes() -> usize {
        4
    }
}

impl PpoConfig {
    /// Main-experiment settings for a task, shared by the left-only
    /// baseline and the bi-hemispheric agent.
    pub fn main_for(task: TaskName) -> Self {
        let learning_rate = match task {
            TaskName::Push | TaskName::PickPlace | TaskName::PushWall | TaskName::BinPicking => 1e-4,
            TaskName::Reach
            | TaskName::ReachWall
            | TaskName::FaucetRotate
            | TaskName::DoorOpen
            | TaskName::ButtonPress => 1e-5,
        };
        let lambda = if task == TaskName::DoorOpen { 0.9 } else { 0.97 };
        PpoConfig {
            learning_rate,
            entropy_coef: 1e-5,
            gamma: 0.99,
            lambda,
            clip: 0.2,
            epochs: 8,
            batch_size: 20,
            normalize_rewards: true,
            value_coef: defaults::value_coef(),
            max_grad_norm: defaults::max_grad_norm(),
            minibatch_size: defaults::minibatch_size(),
            normalize_advantages: true,
            detach_gates_in_value: false,
            left_eval_episodes: defaults::left_eval_episodes(),
        }
    }

    /// Outer-loop settings for RL² meta-training. Batch and minibatch
    /// sizes count trials.
    ///
    /// The learning rate is 1e-5: at 5e-4 and 5e-5 the 2000-step trials
    /// of these networks train unstably and show no within-trial
    /// adaptation. Set `meta_train.ppo.learning_rate` to override.
    pub fn meta_training() -> Self {
        PpoConfig {
            learning_rate: 1e-5,
            entropy_coef: 5e-6,
            gamma: 0.99,
            lambda: 0.97,
            clip: 0.2,
            epochs: 10,
            batch_size: 8,
            normalize_rewards: true,
            value_coef: defaults::value_coef(),
            max_grad_norm: defaults::max_grad_norm(),
            minibatch_size: 2,
            normalize_advantages: true,
            detach_gates_in_value: false,
            left_eval_episodes: 0,
        }
    }

    pub fn minibatches(&self) -> usize {
        self.batch_size.div_ceil(self.minibatch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip", self.clip),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("ppo.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("ppo.{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("ppo.{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.minibatch_size == 0 {
            return Err(Error::config("ppo epochs, batch_size and minibatch_size must be positive"));
        }
        if self.minibatch_size > self.batch_size {
            return Err(Error::config(format!(
                "ppo.minibatch_size {} exceeds batch_size {}",
                self.minibatch_size, self.batch_size
            )));
        }
        Ok(())
    }
}

/// RL² trial structure: one sub-task held fixed for `episodes_per_trial`
/// episodes, with recurrent state carried across episode boundaries and
/// reset between trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSpec {
    #[serde(default = "trial_defaults::episodes")]
    pub episodes_per_trial: usize,
    /// Fraction of trials in which the goal slots are blanked, so the goal
    /// must be found by exploration and remembered across episodes.
    #[serde(default = "trial_defaults::hidden_goal_fraction")]
    pub hidden_goal_fraction: f64,
}

mod trial_defaults {
    pub fn episodes() -> usize {
        10
    }
    pub fn hidden_goal_fraction() -> f64 {
        0.5
    }
}

impl Default for TrialSpec {
    fn default() -> Self {
        TrialSpec {
            episodes_per_trial: trial_defaults::episodes(),
            hidden_goal_fraction: trial_defaults::hidden_goal_fraction(),
        }
    }
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_trial == 0 {
            return Err(Error::config("episodes_per_trial must be positive"));
        }
        if !(0.0..=1.0).contains(&self.hidden_goal_fraction) {
            return Err(Error::config(format!(
                "hidden_goal_fraction must lie in [0, 1], got {}",
                self.hidden_goal_fraction
            )));
        }
        Ok(())
    }
}
