use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentKind, Baseline, BiHemisphericAgent, InputMode, SoloAgent};
use crate::autodiff::{AdamState, Checkpoint};
use crate::envs::{EpisodeOutcome, ObservationLayout, PointWorld, PoolStream, SubTaskPool, TaskName, TaskSpec};
use crate::error::{Error, Result};

use super::config::{PpoConfig, TrialSpec};
use super::normalizer::RewardNormalizer;
use super::ppo::{ppo_update_bihem, ppo_update_solo, UpdateStats};
use super::rollout::{collect_bihem, collect_random, collect_solo, Normalization, Rollout};

/// One row of the training log, written after every update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRow {
    /// Environment steps consumed by training so far, this batch included.
    pub step: u64,
    pub task: TaskName,
    pub seed: u64,
    pub agent: AgentKind,
    /// Mean raw per-step reward of the batch.
    pub mean_reward_raw: f64,
    pub success_rate: f64,
    pub median_p_left: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub penalty: f64,
    pub left_value_loss: f64,
    /// Mean raw per-step reward of the left hemisphere acting alone.
    pub left_eval_mean_reward: Option<f64>,
}

/// Rows of one training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<UpdateRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        write_rows(&self.rows)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        Ok(TrainingLog {
            rows: read_rows(bytes)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&bytes)
    }

    pub fn total_steps(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.step)
    }

    /// `(step, mean reward)` pairs.
    pub fn reward_points(&self) -> Vec<(u64, f64)> {
        self.rows.iter().map(|r| (r.step, r.mean_reward_raw)).collect()
    }

    /// `(step, left-alone mean reward)` pairs for rows that have one.
    pub fn left_eval_points(&self) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.left_eval_mean_reward.map(|v| (r.step, v)))
            .collect()
    }
}

pub(crate) fn write_rows<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::config(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::config(format!("csv: {e}")))
}

pub(crate) fn read_rows<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::config(format!("csv: {e}")))
}

/// What a training run acts on and how long it lasts.
#[derive(Clone, Copy, Debug)]
pub struct RunSpec<'a> {
    pub task: &'a TaskSpec,
    pub pool: &'a SubTaskPool,
    pub seed: u64,
    pub total_steps: u64,
    /// Stop early once a batch reaches this success rate.
    pub stop_at_success: Option<f64>,
}

/// Fresh worlds on `n` sub-tasks sampled with replacement.
pub fn sample_worlds<R: Rng + ?Sized>(
    spec: &TaskSpec,
    pool: &SubTaskPool,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PointWorld>> {
    (0..n)
        .map(|_| PointWorld::new(pool.sample(rng).clone(), spec.layout, spec.episode_length))
        .collect()
}

fn row(
    run: &RunSpec<'_>,
    agent: AgentKind,
    step: u64,
    rollout: &Rollout,
    stats: &UpdateStats,
    left_eval: Option<f64>,
) -> UpdateRow {
    let s = rollout.stats();
    UpdateRow {
        step,
        task: run.task.name,
        seed: run.seed,
        agent,
        mean_reward_raw: s.mean_reward_raw,
        success_rate: s.success_rate,
        median_p_left: s.median_p_left,
        policy_loss: stats.policy_loss,
        value_loss: stats.value_loss,
        entropy: stats.entropy,
        penalty: stats.penalty,
        left_value_loss: stats.left_value_loss,
        left_eval_mean_reward: left_eval,
    }
}

fn finished(run: &RunSpec<'_>, step: u64, success: f64) -> bool {
    step >= run.total_steps || run.stop_at_success.is_some_and(|s| success >= s)
}

/// Trains a single-network agent from scratch with PPO (the left-only
/// baseline).
pub fn train_left_only<R: Rng + ?Sized>(
    agent: &mut SoloAgent,
    run: &RunSpec<'_>,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<TrainingLog> {
    cfg.validate()?;
    let mut norm = RewardNormalizer::new(cfg.normalize_rewards);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut log = TrainingLog::default();
    let mut step = 0;
    while step < run.total_steps {
        let mut worlds = sample_worlds(run.task, run.pool, cfg.batch_size, rng)?;
        let rollout = collect_solo(agent, &mut worlds, 1, Normalization::Update(&mut norm), rng)?;
        step += rollout.rows() as u64;
        let stats = ppo_update_solo(agent, &mut adam, &rollout, cfg, rng)?;
        let r = row(run, AgentKind::LeftOnly, step, &rollout, &stats, None);
        let success = r.success_rate;
        log.rows.push(r);
        if finished(run, step, success) {
            break;
        }
    }
    Ok(log)
}

/// Trains the left hemisphere and gating network of a bi-hemispheric agent.
/// After every batch the left hemisphere also plays
/// `cfg.left_eval_episodes` episodes on its own; those are logged
/// separately and calibrate `V^left`.
pub fn train_bihem<R: Rng + ?Sized>(
    agent: &mut BiHemisphericAgent,
    run: &RunSpec<'_>,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<TrainingLog> {
    cfg.validate()?;
    agent.penalty.validate()?;
    let frozen = agent.right_hash();
    let mut norm = RewardNormalizer::new(cfg.normalize_rewards);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut log = TrainingLog::default();
    let mut step = 0;
    while step < run.total_steps {
        let mut worlds = sample_worlds(run.task, run.pool, cfg.batch_size, rng)?;
        let rollout = collect_bihem(agent, &mut worlds, false, Normalization::Update(&mut norm), rng)?;
        step += rollout.rows() as u64;
        let eval = if cfg.left_eval_episodes > 0 {
            let mut ew = sample_worlds(run.task, run.pool, cfg.left_eval_episodes, rng)?;
            Some(collect_bihem(agent, &mut ew, true, Normalization::Frozen(&norm), rng)?)
        } else {
            None
        };
        let stats = ppo_update_bihem(agent, &mut adam, &rollout, eval.as_ref(), cfg, rng)?;
        let left_eval = eval.as_ref().map(|e| e.stats().mean_reward_raw);
        let r = row(run, AgentKind::Bihem, step, &rollout, &stats, left_eval);
        let success = r.success_rate;
        log.rows.push(r);
        if finished(run, step, success) {
            break;
        }
    }
    if agent.right_hash() != frozen {
        return Err(Error::Invariant("right-hemisphere parameters changed during training".into()));
    }
    Ok(log)
}

/// One row of the meta-training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaRow {
    pub step: u64,
    pub mean_reward_raw: f64,
    pub success_rate: f64,
    /// Mean per-step reward of the first episode of each trial.
    pub first_episode_reward: f64,
    /// Mean per-step reward of the last episode of each trial.
    pub last_episode_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetaTrainLog {
    pub rows: Vec<MetaRow>,
}

impl MetaTrainLog {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        write_rows(&self.rows)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        Ok(MetaTrainLog {
            rows: read_rows(bytes)?,
        })
    }
}

/// Result of meta-training: the log and a checkpoint of the trained agent
/// under `prefix`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTrainOutput {
    pub log: MetaTrainLog,
    pub checkpoint: Checkpoint,
}

/// Worlds for one batch of RL² trials. Trials cycle through `tasks`; the
/// goal is blanked in a random `hidden_goal_fraction` of them.
fn trial_worlds<R: Rng + ?Sized>(
    tasks: &[(TaskSpec, SubTaskPool)],
    trial: &TrialSpec,
    first: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PointWorld>> {
    (first..first + n)
        .map(|i| {
            let (spec, pool) = &tasks[i % tasks.len()];
            let sub = pool.sample(rng).clone();
            let hide = rng.gen_bool(trial.hidden_goal_fraction);
            let layout = ObservationLayout {
                goal_visible: spec.layout.goal_visible && !hide,
                ..spec.layout
            };
            PointWorld::new(sub, layout, spec.episode_length)
        })
        .collect()
}

/// RL² meta-training of `agent` (which must read RL²-augmented inputs) on
/// `tasks`, using PPO over whole trials as the outer loop. Sub-tasks come
/// from each task's meta-training pool.
pub fn meta_train_rl2<R: Rng + ?Sized>(
    agent: &mut SoloAgent,
    tasks: &[TaskSpec],
    trial: &TrialSpec,
    cfg: &PpoConfig,
    total_steps: u64,
    prefix: &str,
    rng: &mut R,
) -> Result<MetaTrainOutput> {
    cfg.validate()?;
    trial.validate()?;
    if agent.input != InputMode::Rl2 {
        return Err(Error::config("meta-training needs an agent with RL² inputs"));
    }
    let first = tasks.first().ok_or_else(|| Error::config("meta-training needs at least one task"))?;
    for t in tasks {
        if t.tier == 3 {
            return Err(Error::config(format!("tier-3 task {} cannot be meta-trained on", t.name)));
        }
        if !t.layout.compatible(&first.layout) || t.episode_length != first.episode_length {
            return Err(Error::config(format!(
                "meta-training task {} differs in layout or episode length from {}",
                t.name, first.name
            )));
        }
    }
    let pools: Vec<(TaskSpec, SubTaskPool)> = tasks
        .iter()
        .map(|t| Ok((t.clone(), t.pool(PoolStream::MetaTrain)?)))
        .collect::<Result<_>>()?;

    let mut norm = RewardNormalizer::new(cfg.normalize_rewards);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut log = MetaTrainLog::default();
    let mut step = 0;
    let mut trials = 0;
    let e = trial.episodes_per_trial;
    while step < total_steps {
        let mut worlds = trial_worlds(&pools, trial, trials, cfg.batch_size, rng)?;
        trials += cfg.batch_size;
        let rollout = collect_solo(agent, &mut worlds, e, Normalization::Update(&mut norm), rng)?;
        step += rollout.rows() as u64;
        let stats = ppo_update_solo(agent, &mut adam, &rollout, cfg, rng)?;
        let s = rollout.stats();
        let per_episode = |k: usize| {
            (0..rollout.batch).map(|b| rollout.outcome(b, k).mean_reward).sum::<f64>() / rollout.batch as f64
        };
        log.rows.push(MetaRow {
            step,
            mean_reward_raw: s.mean_reward_raw,
            success_rate: s.success_rate,
            first_episode_reward: per_episode(0),
            last_episode_reward: per_episode(e - 1),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        });
    }
    let mut checkpoint = Checkpoint::new();
    agent.save_into(prefix, &mut checkpoint);
    Ok(MetaTrainOutput { log, checkpoint })
}

/// Mean per-step reward at each within-trial episode index, averaged over
/// `n_trials` trials on sub-tasks sampled from `pool`.
pub fn evaluate_adaptation<R: Rng + ?Sized>(
    agent: &SoloAgent,
    spec: &TaskSpec,
    pool: &SubTaskPool,
    trial: &TrialSpec,
    n_trials: usize,
    goal_visible: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let e = trial.episodes_per_trial;
    let mut sums = vec![0.0; e];
    let layout = ObservationLayout {
        goal_visible,
        ..spec.layout
    };
    let norm = RewardNormalizer::new(false);
    let mut done = 0;
    while done < n_trials {
        let n = EVAL_CHUNK.min(n_trials - done);
        let mut worlds = (0..n)
            .map(|_| PointWorld::new(pool.sample(rng).clone(), layout, spec.episode_length))
            .collect::<Result<Vec<_>>>()?;
        let r = collect_solo(agent, &mut worlds, e, Normalization::Frozen(&norm), rng)?;
        for b in 0..n {
            for (k, s) in sums.iter_mut().enumerate() {
                *s += r.outcome(b, k).mean_reward;
            }
        }
        done += n;
    }
    Ok(sums.into_iter().map(|s| s / n_trials as f64).collect())
}

const EVAL_CHUNK: usize = 20;

/// Plays `n_episodes` single episodes on sub-tasks sampled with
/// replacement; recurrent state is reset for every episode.
pub fn evaluate_baseline<R: Rng + ?Sized>(
    baseline: &Baseline,
    spec: &TaskSpec,
    pool: &SubTaskPool,
    n_episodes: usize,
    rng: &mut R,
) -> Result<Vec<EpisodeOutcome>> {
    let norm = RewardNormalizer::new(false);
    let mut out = Vec::with_capacity(n_episodes);
    while out.len() < n_episodes {
        let n = EVAL_CHUNK.min(n_episodes - out.len());
        let mut worlds = sample_worlds(spec, pool, n, rng)?;
        let r = match baseline {
            Baseline::LeftOnly(a) | Baseline::RightOnly(a) => {
                collect_solo(a, &mut worlds, 1, Normalization::Frozen(&norm), rng)?
            }
            Baseline::Random(a) => collect_random(*a, &mut worlds, rng)?,
        };
        out.extend_from_slice(&r.outcomes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{HemisphereSizes, PenaltyConfig, RandomAgent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn short(name: TaskName, len: usize) -> TaskSpec {
        TaskSpec {
            episode_length: len,
            ..TaskSpec::new(name)
        }
    }

    fn tiny_cfg() -> PpoConfig {
        PpoConfig {
            batch_size: 4,
            minibatch_size: 2,
            epochs: 1,
            left_eval_episodes: 2,
            ..PpoConfig::main_for(TaskName::Reach)
        }
    }

    #[test]
    fn bihem_run_logs_and_freezes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = short(TaskName::Reach, 10);
        let pool = spec.pool(PoolStream::Main).unwrap();
        let right = SoloAgent::new(HemisphereSizes::hemisphere(12, 3), InputMode::Rl2, &mut rng);
        let mut agent = BiHemisphericAgent::new(&right, 7, PenaltyConfig::default(), &mut rng).unwrap();
        let run = RunSpec {
            task: &spec,
            pool: &pool,
            seed: 3,
            total_steps: 120,
            stop_at_success: None,
        };
        let hash = agent.right_hash();
        let log = train_bihem(&mut agent, &run, &tiny_cfg(), &mut rng).unwrap();
        assert_eq!(log.rows.len(), 3);
        assert_eq!(log.total_steps(), 120);
        assert_eq!(agent.right_hash(), hash);
        assert!(log.rows.iter().all(|r| r.left_eval_mean_reward.is_some() && r.median_p_left.is_some()));
        let back = TrainingLog::from_csv(&log.to_csv().unwrap()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn meta_training_produces_loadable_checkpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tasks: Vec<TaskSpec> = [TaskName::Reach, TaskName::Push, TaskName::PickPlace]
            .into_iter()
            .map(|t| short(t, 5))
            .collect();
        let mut agent = SoloAgent::new(HemisphereSizes::hemisphere(12, 3), InputMode::Rl2, &mut rng);
        let trial = TrialSpec {
            episodes_per_trial: 3,
            ..TrialSpec::default()
        };
        let cfg = PpoConfig {
            batch_size: 3,
            minibatch_size: 3,
            epochs: 1,
            ..PpoConfig::meta_training()
        };
        let out = meta_train_rl2(&mut agent, &tasks, &trial, &cfg, 60, "right", &mut rng).unwrap();
        assert_eq!(out.log.rows.len(), 2);
        assert_eq!(SoloAgent::load_from("right", &out.checkpoint).unwrap(), agent);
        let curve = evaluate_adaptation(&agent, &tasks[0], &tasks[0].pool(PoolStream::HeldOut).unwrap(), &trial, 5, false, &mut rng)
            .unwrap();
        assert_eq!(curve.len(), 3);
    }

    #[test]
    fn meta_training_rejects_tier_three_and_plain_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = SoloAgent::new(HemisphereSizes::hemisphere(12, 3), InputMode::Rl2, &mut rng);
        let cfg = PpoConfig::meta_training();
        let err = meta_train_rl2(&mut agent, &[TaskSpec::new(TaskName::DoorOpen)], &TrialSpec::default(), &cfg, 1, "r", &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
        let mut plain = SoloAgent::new(HemisphereSizes::hemisphere(7, 3), InputMode::Plain, &mut rng);
        let err = meta_train_rl2(&mut plain, &[TaskSpec::new(TaskName::Reach)], &TrialSpec::default(), &cfg, 1, "r", &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn random_baseline_evaluation_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = short(TaskName::Push, 8);
        let pool = spec.pool(PoolStream::Main).unwrap();
        let out = evaluate_baseline(&Baseline::Random(RandomAgent { action_dim: 3 }), &spec, &pool, 45, &mut rng).unwrap();
        assert_eq!(out.len(), 45);
    }
}
