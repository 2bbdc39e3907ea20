use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::agent::{
    make_baseline, AgentKind, BiHemisphericAgent, InputMode, SoloAgent, RIGHT_HEMISPHERE_PREFIX,
    RIGHT_ONLY_PREFIX,
};
use crate::autodiff::Checkpoint;
use crate::envs::{EpisodeOutcome, PoolStream, TaskName, TaskSpec, ACTION_DIM};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::training::{
    evaluate_adaptation, evaluate_baseline, meta_train_rl2, train_bihem, train_left_only, RunSpec,
};

/// Artifact version written into every run record.
pub const ARTIFACT_VERSION: &str = concat!("bihem-", env!("CARGO_PKG_VERSION"));

/// File name of the configuration snapshot kept in the output directory.
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Provenance of one completed cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub cell: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub version: String,
    pub artifacts: Vec<PathBuf>,
}

/// Where every stage reads and writes its files.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub checkpoints: PathBuf,
}

impl Workspace {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Workspace {
            root: cfg.output_dir.clone(),
            checkpoints: cfg.checkpoint_dir(),
        }
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join(CONFIG_SNAPSHOT)
    }

    pub fn record(&self, cell: &str) -> PathBuf {
        self.root.join("records").join(format!("{}.json", cell.replace('/', "__")))
    }

    pub fn meta_checkpoint(&self, prefix: &str) -> PathBuf {
        self.checkpoints.join(format!("{prefix}.ckpt"))
    }

    pub fn meta_log(&self, prefix: &str) -> PathBuf {
        self.root.join("meta").join(format!("{prefix}.csv"))
    }

    pub fn training_log(&self, task: TaskName, agent: AgentKind, seed: usize) -> PathBuf {
        self.root
            .join("main")
            .join(task.as_str())
            .join(agent.as_str())
            .join(format!("seed-{seed}.csv"))
    }

    pub fn baseline_log(&self, task: TaskName, agent: AgentKind) -> PathBuf {
        self.root
            .join("main")
            .join(task.as_str())
            .join(agent.as_str())
            .join("episodes.csv")
    }

    pub fn adaptation_log(&self, task: TaskName, network: &str) -> PathBuf {
        self.root
            .join("eval")
            .join(format!("adaptation-{}-{network}.csv", task.as_str()))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// One row of a non-learning baseline evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub task: TaskName,
    pub agent: AgentKind,
    pub episode: usize,
    pub mean_reward: f64,
    pub total_reward: f64,
    pub success: bool,
}

/// Mean per-step reward by within-trial episode index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRow {
    pub task: TaskName,
    pub network: String,
    pub goal_visible: bool,
    pub episode_index: usize,
    pub mean_reward: f64,
}

/// What happened to one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Ran,
    Skipped,
}

/// Counts of a stage run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageSummary {
    pub ran: usize,
    pub skipped: usize,
}

impl StageSummary {
    fn add(&mut self, s: CellStatus) {
        match s {
            CellStatus::Ran => self.ran += 1,
            CellStatus::Skipped => self.skipped += 1,
        }
    }
}

pub(crate) fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes through a temporary file so an interrupted run never leaves a
/// half-written artifact behind.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn hash_json(v: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(v).expect("json value serialises");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn meta_settings(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "global_seed": cfg.global_seed,
        "sizes": cfg.sizes,
        "meta_train": cfg.meta_train,
    })
}

/// The settings a cell's results depend on. Directories, the seed count and
/// the task and agent lists are left out, so moving outputs or adding seeds,
/// tasks or agents keeps completed cells valid.
fn meta_hash(cfg: &ExperimentConfig) -> String {
    hash_json(&meta_settings(cfg))
}

fn main_hash(cfg: &ExperimentConfig, task: TaskName) -> String {
    hash_json(&serde_json::json!({
        "meta": meta_settings(cfg),
        "total_steps": cfg.main.total_steps,
        "episode_length": cfg.main.episode_length,
        "pool_size": cfg.main.pool_size,
        "layout": cfg.main.layout,
        "ppo": cfg.ppo_for(task),
        "penalty": cfg.penalty_for(task),
        "baseline_episodes": cfg.metrics.baseline_episodes,
    }))
}

fn eval_hash(cfg: &ExperimentConfig) -> String {
    hash_json(&serde_json::json!({
        "meta": meta_settings(cfg),
        "layout": cfg.main.layout,
        "adaptation_trials": cfg.metrics.adaptation_trials,
    }))
}

fn cell_seed(cfg: &ExperimentConfig, parts: &[&str]) -> u64 {
    let global = cfg.global_seed.to_string();
    let mut all = vec![global.as_str()];
    all.extend_from_slice(parts);
    derive_seed(&all)
}

/// Writes the record of a finished cell.
pub(crate) fn write_record(
    ws: &Workspace,
    cell: &str,
    hash: &str,
    seed: u64,
    started_unix: u64,
    artifacts: Vec<PathBuf>,
) -> Result<()> {
    let rec = RunRecord {
        cell: cell.to_string(),
        config_hash: hash.to_string(),
        seed,
        started_unix,
        finished_unix: now(),
        version: ARTIFACT_VERSION.to_string(),
        artifacts,
    };
    let json = serde_json::to_vec_pretty(&rec).expect("record serialises");
    write_file(&ws.record(cell), &json)
}

/// Runs `work` unless a matching record says the cell is already done.
fn run_cell(
    ws: &Workspace,
    hash: &str,
    cell: &str,
    seed: u64,
    work: impl FnOnce(&mut ChaCha8Rng) -> Result<Vec<PathBuf>>,
) -> Result<CellStatus> {
    let record_path = ws.record(cell);
    if record_path.exists() {
        let rec: RunRecord = serde_json::from_slice(&read_file(&record_path)?)
            .map_err(|e| Error::config(format!("{}: {e}", record_path.display())))?;
        if rec.config_hash != hash {
            return Err(Error::config(format!(
                "cell {cell} in {} was produced with different settings; use a fresh output_dir",
                ws.root.display()
            )));
        }
        if rec.artifacts.iter().all(|p| p.exists()) {
            eprintln!("skip {cell} (completed)");
            return Ok(CellStatus::Skipped);
        }
    }
    eprintln!("run  {cell}");
    let started = now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let artifacts = work(&mut rng)?;
    write_record(ws, cell, hash, seed, started, artifacts)?;
    Ok(CellStatus::Ran)
}

fn snapshot(cfg: &ExperimentConfig, ws: &Workspace) -> Result<()> {
    write_file(&ws.config_snapshot(), cfg.to_toml()?.as_bytes())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    crate::training::write_rows(rows)
}

fn load_checkpoint(ws: &Workspace, prefix: &str) -> Result<Checkpoint> {
    let path = ws.meta_checkpoint(prefix);
    if !path.exists() {
        return Err(Error::config(format!(
            "missing checkpoint {}; run the meta-train stage first",
            path.display()
        )));
    }
    Checkpoint::load(&path)
}

/// Meta-trains the right hemisphere and the right-only baseline with RL²;
/// both use the same settings and differ only in GRU width.
pub fn run_meta_train(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let ws = Workspace::new(cfg);
    snapshot(cfg, &ws)?;
    let hash = meta_hash(cfg);
    let specs: Vec<TaskSpec> = cfg.meta_train.tasks.iter().map(|t| cfg.meta_task_spec(*t)).collect();
    let obs_dim = specs[0].obs_dim();
    let input_dim = InputMode::Rl2.input_dim(obs_dim, ACTION_DIM);
    let ppo = cfg.meta_ppo();
    let mut summary = StageSummary::default();
    for (prefix, sizes) in [
        (RIGHT_HEMISPHERE_PREFIX, cfg.sizes.hemisphere(input_dim)),
        (RIGHT_ONLY_PREFIX, cfg.sizes.baseline(input_dim)),
    ] {
        let cell = format!("meta-train/{prefix}");
        let seed = cell_seed(cfg, &["meta-train", prefix]);
        let status = run_cell(&ws, &hash, &cell, seed, |rng| {
            let mut agent = SoloAgent::new(sizes, InputMode::Rl2, rng);
            let out = meta_train_rl2(
                &mut agent,
                &specs,
                &cfg.meta_train.trial,
                &ppo,
                cfg.meta_train.total_steps,
                prefix,
                rng,
            )?;
            let ckpt = ws.meta_checkpoint(prefix);
            let log = ws.meta_log(prefix);
            if let Some(dir) = ckpt.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            out.checkpoint.save(&ckpt)?;
            write_file(&log, &out.log.to_csv()?)?;
            Ok(vec![ckpt, log])
        })?;
        summary.add(status);
    }
    Ok(summary)
}

/// Trains every learning agent on every task and seed, and evaluates the
/// non-learning baselines once per task.
pub fn run_main(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let ws = Workspace::new(cfg);
    let agents = &cfg.main.agents;
    let right_ck = if agents.contains(&AgentKind::Bihem) {
        Some(load_checkpoint(&ws, RIGHT_HEMISPHERE_PREFIX)?)
    } else {
        None
    };
    let right_only_ck = if agents.contains(&AgentKind::RightOnly) {
        Some(load_checkpoint(&ws, RIGHT_ONLY_PREFIX)?)
    } else {
        None
    };
    snapshot(cfg, &ws)?;
    let mut summary = StageSummary::default();
    for &task in &cfg.main.tasks {
        let spec = cfg.main_task_spec(task);
        let pool = spec.pool(PoolStream::Main)?;
        let ppo = cfg.ppo_for(task);
        let hash = main_hash(cfg, task);
        let obs_dim = spec.obs_dim();
        for &kind in agents {
            if !kind.learns() {
                let cell = format!("main/{task}/{kind}");
                let seed = cell_seed(cfg, &["main", task.as_str(), kind.as_str()]);
                let status = run_cell(&ws, &hash, &cell, seed, |rng| {
                    let baseline =
                        make_baseline(kind, cfg.sizes.baseline(obs_dim), right_only_ck.as_ref(), rng)?;
                    let outcomes =
                        evaluate_baseline(&baseline, &spec, &pool, cfg.metrics.baseline_episodes, rng)?;
                    let path = ws.baseline_log(task, kind);
                    write_file(&path, &csv_bytes(&episode_rows(task, kind, &outcomes))?)?;
                    Ok(vec![path])
                })?;
                summary.add(status);
                continue;
            }
            for k in 0..cfg.seeds {
                let cell = format!("main/{task}/{kind}/seed-{k}");
                let seed = cell_seed(cfg, &["main", task.as_str(), kind.as_str(), &k.to_string()]);
                let status = run_cell(&ws, &hash, &cell, seed, |rng| {
                    let run = RunSpec {
                        task: &spec,
                        pool: &pool,
                        seed: k as u64,
                        total_steps: cfg.main.total_steps,
                        stop_at_success: None,
                    };
                    let log = match kind {
                        AgentKind::Bihem => {
                            let ck = right_ck.as_ref().expect("loaded above");
                            let right = SoloAgent::load_from(RIGHT_HEMISPHERE_PREFIX, ck)?;
                            let mut agent = BiHemisphericAgent::with_gating_size(
                                &right,
                                obs_dim,
                                cfg.penalty_for(task),
                                cfg.sizes.gating_gru,
                                rng,
                            )?;
                            train_bihem(&mut agent, &run, &ppo, rng)?
                        }
                        _ => {
                            let mut agent =
                                SoloAgent::new(cfg.sizes.baseline(obs_dim), InputMode::Plain, rng);
                            train_left_only(&mut agent, &run, &ppo, rng)?
                        }
                    };
                    let path = ws.training_log(task, kind, k);
                    write_file(&path, &log.to_csv()?)?;
                    Ok(vec![path])
                })?;
                summary.add(status);
            }
        }
    }
    Ok(summary)
}

fn episode_rows(task: TaskName, agent: AgentKind, outcomes: &[EpisodeOutcome]) -> Vec<EpisodeRow> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| EpisodeRow {
            task,
            agent,
            episode: i,
            mean_reward: o.mean_reward,
            total_reward: o.total_reward,
            success: o.success,
        })
        .collect()
}

/// Measures within-trial adaptation of both meta-trained networks on
/// held-out sub-tasks of every meta-training task, with the goal shown and
/// hidden.
pub fn run_eval(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let ws = Workspace::new(cfg);
    let cks = [
        (RIGHT_HEMISPHERE_PREFIX, load_checkpoint(&ws, RIGHT_HEMISPHERE_PREFIX)?),
        (RIGHT_ONLY_PREFIX, load_checkpoint(&ws, RIGHT_ONLY_PREFIX)?),
    ];
    snapshot(cfg, &ws)?;
    let hash = eval_hash(cfg);
    let mut summary = StageSummary::default();
    for &task in &cfg.meta_train.tasks {
        let spec = TaskSpec {
            layout: cfg.main.layout,
            ..cfg.meta_task_spec(task)
        };
        let pool = spec.pool(PoolStream::HeldOut)?;
        for (prefix, ck) in &cks {
            let cell = format!("eval/{task}/{prefix}");
            let seed = cell_seed(cfg, &["eval", task.as_str(), prefix]);
            let status = run_cell(&ws, &hash, &cell, seed, |rng| {
                let agent = SoloAgent::load_from(prefix, ck)?;
                let mut rows = Vec::new();
                for goal_visible in [true, false] {
                    let curve = evaluate_adaptation(
                        &agent,
                        &spec,
                        &pool,
                        &cfg.meta_train.trial,
                        cfg.metrics.adaptation_trials,
                        goal_visible,
                        rng,
                    )?;
                    rows.extend(curve.into_iter().enumerate().map(|(i, r)| AdaptationRow {
                        task,
                        network: prefix.to_string(),
                        goal_visible,
                        episode_index: i,
                        mean_reward: r,
                    }));
                }
                let path = ws.adaptation_log(task, prefix);
                write_file(&path, &csv_bytes(&rows)?)?;
                Ok(vec![path])
            })?;
            summary.add(status);
        }
    }
    Ok(summary)
}
