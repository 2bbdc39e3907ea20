use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{
    AgentKind, HemisphereSizes, PenaltyConfig, BASELINE_GRU, GATING_GRU, HEMISPHERE_GRU,
    POLICY_HEAD_WIDTH,
};
use crate::envs::{ObservationLayout, TaskName, TaskSpec, ACTION_DIM, DEFAULT_EPISODE_LENGTH, DEFAULT_POOL_SIZE};
use crate::error::{Error, Result};
use crate::metrics::MetricWindow;
use crate::training::{PpoConfig, TrialSpec};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "BIHEM_OUTPUT_DIR";

/// A whole experiment: both stages, every task, every seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Where meta-training checkpoints are written and read. Defaults to
    /// `<output_dir>/checkpoints`.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default)]
    pub global_seed: u64,
    /// Number of seeds per (task, agent) cell.
    #[serde(default = "defaults::seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub sizes: NetworkSizes,
    #[serde(default)]
    pub meta_train: MetaTrainStage,
    #[serde(default)]
    pub main: MainStage,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Per-task overrides of PPO and penalty settings.
    #[serde(default)]
    pub tasks: BTreeMap<TaskName, TaskOverride>,
}

mod defaults {
    use super::*;

    pub fn seeds() -> usize {
        5
    }
    pub fn meta_tasks() -> Vec<TaskName> {
        vec![TaskName::Reach, TaskName::Push, TaskName::PickPlace]
    }
    pub fn meta_steps() -> u64 {
        2_000_000
    }
    pub fn main_tasks() -> Vec<TaskName> {
        TaskName::ALL.to_vec()
    }
    pub fn agents() -> Vec<AgentKind> {
        AgentKind::ALL.to_vec()
    }
    pub fn main_steps() -> u64 {
        300_000
    }
    pub fn episode_length() -> usize {
        DEFAULT_EPISODE_LENGTH
    }
    pub fn pool_size() -> usize {
        DEFAULT_POOL_SIZE
    }
    pub fn fraction() -> f64 {
        0.2
    }
    pub fn baseline_episodes() -> usize {
        2000
    }
    pub fn adaptation_trials() -> usize {
        100
    }
    pub fn hemisphere_gru() -> usize {
        HEMISPHERE_GRU
    }
    pub fn baseline_gru() -> usize {
        BASELINE_GRU
    }
    pub fn head_width() -> usize {
        POLICY_HEAD_WIDTH
    }
    pub fn gating_gru() -> usize {
        GATING_GRU
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSizes {
    #[serde(default = "defaults::hemisphere_gru")]
    pub hemisphere_gru: usize,
    #[serde(default = "defaults::baseline_gru")]
    pub baseline_gru: usize,
    #[serde(default = "defaults::head_width")]
    pub head_width: usize,
    #[serde(default = "defaults::gating_gru")]
    pub gating_gru: usize,
}

impl Default for NetworkSizes {
    fn default() -> Self {
        NetworkSizes {
            hemisphere_gru: HEMISPHERE_GRU,
            baseline_gru: BASELINE_GRU,
            head_width: POLICY_HEAD_WIDTH,
            gating_gru: GATING_GRU,
        }
    }
}

impl NetworkSizes {
    pub fn hemisphere(&self, input_dim: usize) -> HemisphereSizes {
        HemisphereSizes {
            input_dim,
            gru: self.hemisphere_gru,
            head_width: self.head_width,
            action_dim: ACTION_DIM,
        }
    }

    pub fn baseline(&self, input_dim: usize) -> HemisphereSizes {
        HemisphereSizes {
            gru: self.baseline_gru,
            ..self.hemisphere(input_dim)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaTrainStage {
    #[serde(default = "defaults::meta_tasks")]
    pub tasks: Vec<TaskName>,
    /// Environment steps for each of the two meta-trained networks.
    #[serde(default = "defaults::meta_steps")]
    pub total_steps: u64,
    #[serde(default = "defaults::episode_length")]
    pub episode_length: usize,
    #[serde(default = "defaults::pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub layout: ObservationLayout,
    #[serde(default)]
    pub trial: TrialSpec,
    #[serde(default)]
    pub ppo: PpoOverride,
}

impl Default for MetaTrainStage {
    fn default() -> Self {
        MetaTrainStage {
            tasks: defaults::meta_tasks(),
            total_steps: defaults::meta_steps(),
            episode_length: defaults::episode_length(),
            pool_size: defaults::pool_size(),
            layout: ObservationLayout::default(),
            trial: TrialSpec::default(),
            ppo: PpoOverride::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MainStage {
    #[serde(default = "defaults::main_tasks")]
    pub tasks: Vec<TaskName>,
    #[serde(default = "defaults::agents")]
    pub agents: Vec<AgentKind>,
    /// Environment steps per learning cell.
    #[serde(default = "defaults::main_steps")]
    pub total_steps: u64,
    #[serde(default = "defaults::episode_length")]
    pub episode_length: usize,
    #[serde(default = "defaults::pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub layout: ObservationLayout,
}

impl Default for MainStage {
    fn default() -> Self {
        MainStage {
            tasks: defaults::main_tasks(),
            agents: defaults::agents(),
            total_steps: defaults::main_steps(),
            episode_length: defaults::episode_length(),
            pool_size: defaults::pool_size(),
            layout: ObservationLayout::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// IRR/FRR window `k` as a fraction of the main-stage budget `T`.
    #[serde(default = "defaults::fraction")]
    pub window_fraction: f64,
    /// Rolling-median window for plotted curves, as a fraction of `T`.
    #[serde(default = "defaults::fraction")]
    pub smoothing_fraction: f64,
    /// Episodes used to summarise each non-learning baseline.
    #[serde(default = "defaults::baseline_episodes")]
    pub baseline_episodes: usize,
    /// Held-out reach trials in the adaptation evaluation.
    #[serde(default = "defaults::adaptation_trials")]
    pub adaptation_trials: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            window_fraction: defaults::fraction(),
            smoothing_fraction: defaults::fraction(),
            baseline_episodes: defaults::baseline_episodes(),
            adaptation_trials: defaults::adaptation_trials(),
        }
    }
}

/// Optional replacements for individual PPO settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoOverride {
    pub learning_rate: Option<f64>,
    pub entropy_coef: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub clip: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub normalize_rewards: Option<bool>,
    pub value_coef: Option<f64>,
    pub max_grad_norm: Option<f64>,
    pub minibatch_size: Option<usize>,
    pub normalize_advantages: Option<bool>,
    pub detach_gates_in_value: Option<bool>,
    pub left_eval_episodes: Option<usize>,
}

impl PpoOverride {
    pub fn apply(&self, base: PpoConfig) -> PpoConfig {
        PpoConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            entropy_coef: self.entropy_coef.unwrap_or(base.entropy_coef),
            gamma: self.gamma.unwrap_or(base.gamma),
            lambda: self.lambda.unwrap_or(base.lambda),
            clip: self.clip.unwrap_or(base.clip),
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            normalize_rewards: self.normalize_rewards.unwrap_or(base.normalize_rewards),
            value_coef: self.value_coef.unwrap_or(base.value_coef),
            max_grad_norm: self.max_grad_norm.unwrap_or(base.max_grad_norm),
            minibatch_size: self.minibatch_size.unwrap_or(base.minibatch_size),
            normalize_advantages: self.normalize_advantages.unwrap_or(base.normalize_advantages),
            detach_gates_in_value: self.detach_gates_in_value.unwrap_or(base.detach_gates_in_value),
            left_eval_episodes: self.left_eval_episodes.unwrap_or(base.left_eval_episodes),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskOverride {
    #[serde(default)]
    pub ppo: PpoOverride,
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, applies the output-directory environment override, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("checkpoints"))
    }

    pub fn meta_task_spec(&self, name: TaskName) -> TaskSpec {
        TaskSpec {
            pool_size: self.meta_train.pool_size,
            episode_length: self.meta_train.episode_length,
            layout: self.meta_train.layout,
            ..TaskSpec::new(name)
        }
    }

    pub fn main_task_spec(&self, name: TaskName) -> TaskSpec {
        TaskSpec {
            pool_size: self.main.pool_size,
            episode_length: self.main.episode_length,
            layout: self.main.layout,
            ..TaskSpec::new(name)
        }
    }

    pub fn meta_ppo(&self) -> PpoConfig {
        self.meta_train.ppo.apply(PpoConfig::meta_training())
    }

    /// PPO settings of a task, shared by the left-only baseline and the
    /// bi-hemispheric agent.
    pub fn ppo_for(&self, task: TaskName) -> PpoConfig {
        let base = PpoConfig::main_for(task);
        match self.tasks.get(&task) {
            Some(o) => o.ppo.apply(base),
            None => base,
        }
    }

    pub fn penalty_for(&self, task: TaskName) -> PenaltyConfig {
        self.tasks
            .get(&task)
            .and_then(|o| o.penalty)
            .unwrap_or_else(|| PenaltyConfig::for_task(task))
    }

    pub fn metric_window(&self) -> Result<MetricWindow> {
        MetricWindow::from_fraction(self.metrics.window_fraction, self.main.total_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::config("seeds: at least one seed is required"));
        }
        let s = &self.sizes;
        if s.hemisphere_gru == 0 || s.baseline_gru == 0 || s.head_width == 0 || s.gating_gru == 0 {
            return Err(Error::config("sizes: every network size must be positive"));
        }
        if self.meta_train.tasks.is_empty() {
            return Err(Error::config("meta_train.tasks: at least one task is required"));
        }
        for t in &self.meta_train.tasks {
            if t.tier() == 3 {
                return Err(Error::config(format!(
                    "meta_train.tasks: {t} is a tier-3 task and cannot be meta-trained on"
                )));
            }
        }
        if !self.meta_train.layout.compatible(&self.main.layout) {
            return Err(Error::config(
                "main.layout: observation layout differs from meta_train.layout",
            ));
        }
        self.meta_train.layout.validate()?;
        self.main.layout.validate()?;
        self.meta_train.trial.validate()?;
        self.meta_ppo()
            .validate()
            .map_err(|e| Error::config(format!("meta_train.ppo: {e}")))?;
        if self.meta_train.episode_length == 0 || self.main.episode_length == 0 {
            return Err(Error::config("episode_length must be positive"));
        }
        if self.meta_train.pool_size == 0 || self.main.pool_size == 0 {
            return Err(Error::config("pool_size must be positive"));
        }
        if self.main.tasks.is_empty() {
            return Err(Error::config("main.tasks: at least one task is required"));
        }
        if self.main.total_steps == 0 {
            return Err(Error::config("main.total_steps must be positive"));
        }
        for t in &self.main.tasks {
            self.ppo_for(*t)
                .validate()
                .map_err(|e| Error::config(format!("tasks.{t}.ppo: {e}")))?;
            let p = self.penalty_for(*t);
            if p.beta < 0.0 {
                return Err(Error::config(format!("tasks.{t}.penalty.beta must be >= 0, got {}", p.beta)));
            }
            p.validate().map_err(|e| Error::config(format!("tasks.{t}.penalty: {e}")))?;
        }
        let m = &self.metrics;
        if !(m.window_fraction > 0.0) {
            return Err(Error::config("metrics.window_fraction must be positive"));
        }
        if m.window_fraction > 1.0 {
            return Err(Error::config(format!(
                "metrics.window_fraction {} gives a window k larger than the budget T",
                m.window_fraction
            )));
        }
        if !(m.smoothing_fraction > 0.0 && m.smoothing_fraction <= 1.0) {
            return Err(Error::config("metrics.smoothing_fraction must lie in (0, 1]"));
        }
        if m.baseline_episodes == 0 || m.adaptation_trials == 0 {
            return Err(Error::config("metrics: episode and trial counts must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(extra: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&format!("output_dir = \"out\"\n{extra}"))
    }

    #[test]
    fn defaults_follow_protocol() {
        let c = parse("").unwrap();
        assert_eq!(c.seeds, 5);
        assert_eq!(c.main.tasks.len(), 9);
        assert_eq!(c.meta_train.tasks.len(), 3);
        assert_eq!(c.meta_train.trial.episodes_per_trial, 10);
        assert_eq!(c.ppo_for(TaskName::DoorOpen).lambda, 0.9);
        assert_eq!(c.penalty_for(TaskName::DoorOpen).alpha, 1.0);
        assert_eq!(c.metric_window().unwrap().k, 60_000);
        assert_eq!(c.checkpoint_dir(), PathBuf::from("out/checkpoints"));
    }

    #[test]
    fn rejects_tier_three_meta_task() {
        let err = parse("[meta_train]\ntasks = [\"reach\", \"door-open\"]\n").unwrap_err();
        assert!(err.to_string().contains("meta_train.tasks"), "{err}");
    }

    #[test]
    fn rejects_layout_mismatch() {
        let err = parse("[main.layout]\ntask_slots = 9\none_hot = true\n").unwrap_err();
        assert!(err.to_string().contains("main.layout"), "{err}");
    }

    #[test]
    fn rejects_negative_beta() {
        let err = parse("[tasks.push.penalty]\nalpha = 0.75\nbeta = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn rejects_window_longer_than_budget() {
        let err = parse("[metrics]\nwindow_fraction = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("window"), "{err}");
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(parse("[main]\nsteps = 3\n").is_err());
    }

    #[test]
    fn overrides_apply_and_round_trip() {
        let c = parse("[tasks.reach.ppo]\nlearning_rate = 3e-4\nbatch_size = 10\n").unwrap();
        assert_eq!(c.ppo_for(TaskName::Reach).learning_rate, 3e-4);
        assert_eq!(c.ppo_for(TaskName::Reach).batch_size, 10);
        assert_eq!(c.ppo_for(TaskName::Push).learning_rate, 1e-4);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }
}
