use rand::Rng;

use crate::agent::{
    clip_action, log_prob, BiHemisphericAgent, BihemState, GaussianPolicy, PrevStep, RandomAgent,
    SoloAgent, GATING_INPUT_DIM,
};
use crate::envs::{EpisodeOutcome, PointWorld};
use crate::error::{Error, Result};
use crate::metrics::median;

use super::normalizer::RewardNormalizer;

/// A batch of `batch` sequences of `steps` transitions each, stored
/// column-wise in time-major order: row `t * batch + b` is step `t` of
/// sequence `b`.
///
/// A sequence is one episode, or one RL² trial of several episodes on the
/// same sub-task. Fields that only some agents produce are left empty.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Rollout {
    pub steps: usize,
    pub batch: usize,
    pub episode_length: usize,
    pub input_dim: usize,
    pub action_dim: usize,
    /// Input of the trained network (RL²-augmented when applicable; the
    /// left hemisphere's observation for bi-hemispheric agents).
    pub inputs: Vec<f64>,
    /// Pre-clip sampled actions.
    pub actions: Vec<f64>,
    /// Log-probability of the pre-clip action.
    pub log_probs: Vec<f64>,
    pub rewards_raw: Vec<f64>,
    /// Rewards fed to the learner (normalised when enabled).
    pub rewards: Vec<f64>,
    /// Value of the acting agent (`V^bihem` for bi-hemispheric agents).
    pub values: Vec<f64>,
    pub v_right: Vec<f64>,
    pub v_left: Vec<f64>,
    pub p_right: Vec<f64>,
    pub p_left: Vec<f64>,
    /// `[rows x 4]` gating inputs seen at each step.
    pub gate_inputs: Vec<f64>,
    /// `[rows x action_dim]` right-hemisphere means, cached because the
    /// frozen hemisphere never enters the training graph.
    pub mu_right: Vec<f64>,
    /// Episode ended at this step.
    pub dones: Vec<bool>,
    pub successes: Vec<bool>,
    /// Outcome of episode `e` of sequence `b` at `b * episodes + e`.
    pub outcomes: Vec<EpisodeOutcome>,
}

/// Borrowed view of one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<'a> {
    pub observation: &'a [f64],
    pub action: &'a [f64],
    pub log_prob: f64,
    pub reward_raw: f64,
    pub reward: f64,
    pub v_right: Option<f64>,
    pub v_left: Option<f64>,
    pub value: f64,
    /// `(P^right, P^left)`
    pub gates: Option<(f64, f64)>,
    pub done: bool,
    pub success: bool,
}

/// Per-batch summary: mean raw reward, success rate, median gate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutStats {
    pub mean_reward_raw: f64,
    pub success_rate: f64,
    pub median_p_left: Option<f64>,
    pub episodes: usize,
}

impl Rollout {
    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }

    pub fn episodes_per_sequence(&self) -> usize {
        self.steps / self.episode_length
    }

    pub fn row(&self, t: usize, b: usize) -> usize {
        t * self.batch + b
    }

    pub fn transition(&self, t: usize, b: usize) -> Transition<'_> {
        let i = self.row(t, b);
        let opt = |v: &[f64]| v.get(i).copied();
        Transition {
            observation: &self.inputs[i * self.input_dim..(i + 1) * self.input_dim],
            action: &self.actions[i * self.action_dim..(i + 1) * self.action_dim],
            log_prob: self.log_probs[i],
            reward_raw: self.rewards_raw[i],
            reward: self.rewards[i],
            v_right: opt(&self.v_right),
            v_left: opt(&self.v_left),
            value: self.values[i],
            gates: opt(&self.p_right).zip(opt(&self.p_left)),
            done: self.dones[i],
            success: self.successes[i],
        }
    }

    /// Column `b` of a per-row field.
    pub fn column(&self, field: &[f64], b: usize) -> Vec<f64> {
        (0..self.steps).map(|t| field[self.row(t, b)]).collect()
    }

    pub fn outcome(&self, b: usize, episode: usize) -> &EpisodeOutcome {
        &self.outcomes[b * self.episodes_per_sequence() + episode]
    }

    pub fn stats(&self) -> RolloutStats {
        let n = self.outcomes.len().max(1) as f64;
        RolloutStats {
            mean_reward_raw: self.outcomes.iter().map(|o| o.mean_reward).sum::<f64>() / n,
            success_rate: self.outcomes.iter().filter(|o| o.success).count() as f64 / n,
            median_p_left: if self.p_left.is_empty() {
                None
            } else {
                median(&self.p_left).ok()
            },
            episodes: self.outcomes.len(),
        }
    }
}

/// How the reward normaliser is used while collecting.
#[derive(Debug)]
pub enum Normalization<'a> {
    /// Fold every reward into the running statistics.
    Update(&'a mut RewardNormalizer),
    /// Standardise with fixed statistics (evaluation episodes).
    Frozen(&'a RewardNormalizer),
}

impl Normalization<'_> {
    fn apply(&mut self, r: f64) -> Result<f64> {
        match self {
            Normalization::Update(n) => n.normalize(r),
            Normalization::Frozen(n) => Ok(n.apply(r)),
        }
    }
}

/// One agent step for all rows: means (or `None` for uniform random
/// actions) and the acting value.
struct ActorStep {
    mean: Option<Vec<f64>>,
    value: Vec<f64>,
}

trait Actor {
    fn input_dim(&self) -> usize;
    fn log_std(&self) -> &[f64];
    /// Called at the start of every sequence with the number of rows.
    fn reset(&mut self, rows: usize);
    fn act(&mut self, obs: &[f64], prev: &[PrevStep], out: &mut Rollout) -> Result<ActorStep>;
    /// Reward fed to the learner for this step.
    fn observe(&mut self, _rewards: &[f64]) {}
}

struct SoloActor<'a> {
    agent: &'a SoloAgent,
    hidden: Vec<f64>,
}

impl Actor for SoloActor<'_> {
    fn input_dim(&self) -> usize {
        self.agent.net.input_dim()
    }

    fn log_std(&self) -> &[f64] {
        self.agent.log_std.data()
    }

    fn reset(&mut self, rows: usize) {
        self.hidden = vec![0.0; rows * self.agent.net.hidden_dim()];
    }

    fn act(&mut self, obs: &[f64], prev: &[PrevStep], out: &mut Rollout) -> Result<ActorStep> {
        let rows = prev.len();
        let obs_dim = obs.len() / rows;
        let start = out.inputs.len();
        for (i, p) in prev.iter().enumerate() {
            self.agent.input.write(&mut out.inputs, &obs[i * obs_dim..(i + 1) * obs_dim], p);
        }
        let res = self.agent.net.forward(&out.inputs[start..], &self.hidden)?;
        self.hidden = res.hidden;
        Ok(ActorStep {
            mean: Some(res.mean),
            value: res.value,
        })
    }
}

struct BihemActor<'a> {
    agent: &'a BiHemisphericAgent,
    left_alone: bool,
    state: Option<BihemState>,
    last: Option<crate::agent::BihemStep>,
}

impl Actor for BihemActor<'_> {
    fn input_dim(&self) -> usize {
        self.agent.left.input_dim()
    }

    fn log_std(&self) -> &[f64] {
        self.agent.log_std.data()
    }

    fn reset(&mut self, rows: usize) {
        self.state = Some(self.agent.initial_state(rows));
        self.last = None;
    }

    fn act(&mut self, obs: &[f64], prev: &[PrevStep], out: &mut Rollout) -> Result<ActorStep> {
        let rows = prev.len();
        let obs_dim = obs.len() / rows;
        let mut right_in = Vec::new();
        if !self.left_alone {
            for (i, p) in prev.iter().enumerate() {
                self.agent
                    .right_input
                    .write(&mut right_in, &obs[i * obs_dim..(i + 1) * obs_dim], p);
            }
        }
        let state = self.state.as_mut().expect("reset before act");
        let step = self.agent.step(obs, &right_in, state, self.left_alone)?;
        out.inputs.extend_from_slice(obs);
        for gi in &step.gate_input {
            out.gate_inputs.extend_from_slice(&gi.to_array());
        }
        out.mu_right.extend_from_slice(&step.mu_right);
        out.v_right.extend_from_slice(&step.v_right);
        out.v_left.extend_from_slice(&step.v_left);
        for g in &step.gates {
            out.p_right.push(g.right);
            out.p_left.push(g.left);
        }
        let res = ActorStep {
            mean: Some(step.mean.clone()),
            value: step.value.clone(),
        };
        self.last = Some(step);
        Ok(res)
    }

    fn observe(&mut self, rewards: &[f64]) {
        if let (Some(state), Some(step)) = (self.state.as_mut(), self.last.as_ref()) {
            BiHemisphericAgent::observe(state, step, rewards);
        }
    }
}

struct RandomActor {
    input_dim: usize,
}

impl Actor for RandomActor {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn log_std(&self) -> &[f64] {
        &[]
    }

    fn reset(&mut self, _rows: usize) {}

    fn act(&mut self, obs: &[f64], prev: &[PrevStep], out: &mut Rollout) -> Result<ActorStep> {
        out.inputs.extend_from_slice(obs);
        Ok(ActorStep {
            mean: None,
            value: vec![0.0; prev.len()],
        })
    }
}

/// Runs `episodes` consecutive episodes in every world in lockstep. The
/// actor is reset once, at the start; the worlds are reset before every
/// episode.
fn drive<R: Rng + ?Sized>(
    actor: &mut dyn Actor,
    worlds: &mut [PointWorld],
    episodes: usize,
    mut norm: Normalization<'_>,
    rng: &mut R,
    random: Option<RandomAgent>,
) -> Result<Rollout> {
    let batch = worlds.len();
    if batch == 0 || episodes == 0 {
        return Err(Error::usage("rollout needs at least one world and one episode"));
    }
    let episode_length = worlds[0].steps_per_episode();
    if worlds.iter().any(|w| w.steps_per_episode() != episode_length) {
        return Err(Error::config("worlds in one rollout must share an episode length"));
    }
    let obs_dim = worlds[0].obs_dim();
    let action_dim = crate::envs::ACTION_DIM;
    let steps = episodes * episode_length;
    let rows = steps * batch;
    let mut out = Rollout {
        steps,
        batch,
        episode_length,
        input_dim: actor.input_dim(),
        action_dim,
        ..Rollout::default()
    };
    out.inputs.reserve(rows * out.input_dim);
    out.actions.reserve(rows * action_dim);

    actor.reset(batch);
    let mut prev = vec![PrevStep::initial(action_dim); batch];
    let mut totals = vec![vec![0.0; batch]; episodes];
    let mut succeeded = vec![vec![false; batch]; episodes];
    let log_std = actor.log_std().to_vec();
    for e in 0..episodes {
        let mut obs: Vec<f64> = Vec::with_capacity(batch * obs_dim);
        for w in worlds.iter_mut() {
            obs.extend(w.reset());
        }
        for _ in 0..episode_length {
            if obs.len() != batch * obs_dim {
                return Err(Error::config("worlds in one rollout must share an observation width"));
            }
            let step = actor.act(&obs, &prev, &mut out)?;
            let mut next_obs = Vec::with_capacity(batch * obs_dim);
            let mut fed = Vec::with_capacity(batch);
            for (b, world) in worlds.iter_mut().enumerate() {
                let (action, lp) = match (&step.mean, random) {
                    (Some(mean), _) => {
                        let policy = GaussianPolicy::new(
                            mean[b * action_dim..(b + 1) * action_dim].to_vec(),
                            log_std.clone(),
                        )?;
                        let a = policy.sample(rng);
                        let lp = log_prob(&a, &policy.mean, &policy.log_std);
                        (a, lp)
                    }
                    (None, Some(r)) => (r.act(rng), 0.0),
                    (None, None) => return Err(Error::usage("actor produced no action")),
                };
                if !lp.is_finite() || action.iter().any(|a| !a.is_finite()) {
                    return Err(Error::numeric("policy produced a non-finite action"));
                }
                let clipped = clip_action(&action);
                let res = world.step(&clipped)?;
                let r = norm.apply(res.reward)?;
                out.actions.extend_from_slice(&action);
                out.log_probs.push(lp);
                out.rewards_raw.push(res.reward);
                out.rewards.push(r);
                out.values.push(step.value[b]);
                out.dones.push(res.done);
                out.successes.push(res.success);
                totals[e][b] += res.reward;
                succeeded[e][b] |= res.success;
                prev[b] = PrevStep {
                    action: clipped,
                    reward: res.reward,
                    done: res.done,
                };
                fed.push(r);
                next_obs.extend(res.observation);
            }
            actor.observe(&fed);
            obs = next_obs;
        }
    }
    for b in 0..batch {
        for e in 0..episodes {
            out.outcomes.push(EpisodeOutcome {
                total_reward: totals[e][b],
                mean_reward: totals[e][b] / episode_length as f64,
                success: succeeded[e][b],
            });
        }
    }
    debug_assert_eq!(out.rewards.len(), rows);
    Ok(out)
}

/// One sequence of `episodes` episodes per world for a single-network
/// agent; the recurrent state persists across the episodes of a sequence.
pub fn collect_solo<R: Rng + ?Sized>(
    agent: &SoloAgent,
    worlds: &mut [PointWorld],
    episodes: usize,
    norm: Normalization<'_>,
    rng: &mut R,
) -> Result<Rollout> {
    check_width(agent.input.input_dim(worlds_obs_dim(worlds)?, agent.action_dim()), agent.net.input_dim())?;
    let mut actor = SoloActor {
        agent,
        hidden: Vec::new(),
    };
    drive(&mut actor, worlds, episodes, norm, rng, None)
}

/// One episode per world for the bi-hemispheric agent. With `left_alone`
/// the gating network is bypassed and `P_left = 1`.
pub fn collect_bihem<R: Rng + ?Sized>(
    agent: &BiHemisphericAgent,
    worlds: &mut [PointWorld],
    left_alone: bool,
    norm: Normalization<'_>,
    rng: &mut R,
) -> Result<Rollout> {
    check_width(worlds_obs_dim(worlds)?, agent.left.input_dim())?;
    let mut actor = BihemActor {
        agent,
        left_alone,
        state: None,
        last: None,
    };
    let out = drive(&mut actor, worlds, 1, norm, rng, None)?;
    debug_assert_eq!(out.gate_inputs.len(), out.rows() * GATING_INPUT_DIM);
    Ok(out)
}

/// One episode per world with uniformly random actions.
pub fn collect_random<R: Rng + ?Sized>(
    agent: RandomAgent,
    worlds: &mut [PointWorld],
    rng: &mut R,
) -> Result<Rollout> {
    let mut actor = RandomActor {
        input_dim: worlds_obs_dim(worlds)?,
    };
    let mut unused = RewardNormalizer::new(false);
    drive(&mut actor, worlds, 1, Normalization::Update(&mut unused), rng, Some(agent))
}

fn worlds_obs_dim(worlds: &[PointWorld]) -> Result<usize> {
    worlds
        .first()
        .map(|w| w.obs_dim())
        .ok_or_else(|| Error::usage("rollout needs at least one world"))
}

fn check_width(provided: usize, expected: usize) -> Result<()> {
    if provided != expected {
        return Err(Error::config(format!(
            "network reads {expected} inputs, the environment provides {provided}"
        )));
    }
    Ok(())
}
