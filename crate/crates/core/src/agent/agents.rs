use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::compose::{compose_mean, compose_value, PenaltyConfig};
use super::gating::{Gates, GatingInput, GatingNetwork, GATING_GRU, GATING_INPUT_DIM};
use super::hemisphere::{HemisphereNetwork, HemisphereSizes};
use super::policy::INITIAL_LOG_STD;
use crate::autodiff::{Checkpoint, Tensor};
use crate::envs::reward::MAX_REWARD;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Bihem,
    LeftOnly,
    RightOnly,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Bihem,
        AgentKind::LeftOnly,
        AgentKind::RightOnly,
        AgentKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Bihem => "bihem",
            AgentKind::LeftOnly => "left-only",
            AgentKind::RightOnly => "right-only",
            AgentKind::Random => "random",
        }
    }

    /// Whether the agent is trained in the main stage.
    pub fn learns(self) -> bool {
        matches!(self, AgentKind::Bihem | AgentKind::LeftOnly)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown agent kind {s:?}")))
    }
}

/// How a network's input vector is assembled from the environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    /// The observation as is.
    Plain,
    /// Observation followed by the previous action, previous reward
    /// (divided by the maximum reward) and previous done flag.
    Rl2,
}

impl InputMode {
    pub fn input_dim(self, obs_dim: usize, action_dim: usize) -> usize {
        match self {
            InputMode::Plain => obs_dim,
            InputMode::Rl2 => obs_dim + action_dim + 2,
        }
    }

    /// Appends the network input for one row to `out`.
    pub fn write(self, out: &mut Vec<f64>, obs: &[f64], prev: &PrevStep) {
        out.extend_from_slice(obs);
        if self == InputMode::Rl2 {
            out.extend_from_slice(&prev.action);
            out.push(prev.reward / MAX_REWARD);
            out.push(if prev.done { 1.0 } else { 0.0 });
        }
    }
}

/// Previous-step signals fed to RL² networks.
#[derive(Clone, Debug, PartialEq)]
pub struct PrevStep {
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

impl PrevStep {
    pub fn initial(action_dim: usize) -> Self {
        PrevStep {
            action: vec![0.0; action_dim],
            reward: 0.0,
            done: false,
        }
    }
}

fn initial_log_std(action_dim: usize) -> Tensor {
    Tensor::matrix(1, action_dim, vec![INITIAL_LOG_STD; action_dim]).expect("positive action dim")
}

/// A single hemisphere acting alone: the left-only and right-only baselines,
/// and the network being meta-trained.
#[derive(Clone, Debug, PartialEq)]
pub struct SoloAgent {
    pub net: HemisphereNetwork,
    pub log_std: Tensor,
    pub input: InputMode,
}

impl SoloAgent {
    pub fn new<R: Rng + ?Sized>(sizes: HemisphereSizes, input: InputMode, rng: &mut R) -> Self {
        SoloAgent {
            net: HemisphereNetwork::new(sizes, rng),
            log_std: initial_log_std(sizes.action_dim),
            input,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn save_into(&self, prefix: &str, ck: &mut Checkpoint) {
        self.net.save_into(&format!("{prefix}/net"), ck);
        ck.insert(format!("{prefix}/log_std"), self.log_std.clone());
        let rl2 = if self.input == InputMode::Rl2 { 1.0 } else { 0.0 };
        ck.insert(format!("{prefix}/rl2_inputs"), Tensor::scalar(rl2));
    }

    /// Restores an agent saved with [`SoloAgent::save_into`]; network sizes
    /// are read from the stored shapes.
    pub fn load_from(prefix: &str, ck: &Checkpoint) -> Result<Self> {
        let shape = |name: &str| -> Result<Vec<usize>> {
            ck.get(&format!("{prefix}/{name}"))
                .map(|t| t.shape().to_vec())
                .ok_or_else(|| Error::config(format!("checkpoint has no entry {prefix}/{name}")))
        };
        let wz = shape("net/gru/wz")?;
        let hid = shape("net/policy_hidden/weight")?;
        let out = shape("net/policy_out/weight")?;
        if wz.len() != 2 || hid.len() != 2 || out.len() != 2 {
            return Err(Error::config(format!("checkpoint {prefix}: malformed network shapes")));
        }
        let sizes = HemisphereSizes {
            input_dim: wz[0],
            gru: wz[1],
            head_width: hid[1],
            action_dim: out[1],
        };
        let net = HemisphereNetwork::load_from(&format!("{prefix}/net"), ck, sizes)?;
        let log_std = ck.take(&format!("{prefix}/log_std"), &[1, sizes.action_dim])?;
        let input = match ck.take(&format!("{prefix}/rl2_inputs"), &[1])?.item() {
            v if v == 1.0 => InputMode::Rl2,
            _ => InputMode::Plain,
        };
        Ok(SoloAgent { net, log_std, input })
    }
}

/// SHA-256 over parameter names, shapes and bit patterns.
pub fn parameter_hash<'a>(tensors: impl IntoIterator<Item = (String, &'a Tensor)>) -> [u8; 32] {
    let mut h = Sha256::new();
    for (name, t) in tensors {
        h.update(name.as_bytes());
        for d in t.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Recurrent state of a batch of bi-hemispheric rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct BihemState {
    pub h_right: Vec<f64>,
    pub h_left: Vec<f64>,
    pub h_gate: Vec<f64>,
    pub gate_input: Vec<GatingInput>,
}

/// Everything one bi-hemispheric step produces for a batch of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct BihemStep {
    pub gates: Vec<Gates>,
    pub gate_input: Vec<GatingInput>,
    /// `[rows x action_dim]`
    pub mean: Vec<f64>,
    pub mu_right: Vec<f64>,
    pub mu_left: Vec<f64>,
    pub v_right: Vec<f64>,
    pub v_left: Vec<f64>,
    pub value: Vec<f64>,
}

/// Frozen right hemisphere, trainable left hemisphere and gating network,
/// and a learned state-independent log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct BiHemisphericAgent {
    pub right: HemisphereNetwork,
    pub right_input: InputMode,
    pub left: HemisphereNetwork,
    pub gating: GatingNetwork,
    pub log_std: Tensor,
    pub penalty: PenaltyConfig,
}

impl BiHemisphericAgent {
    /// Wraps a trained right hemisphere with a fresh left hemisphere and
    /// gating network. The left hemisphere reads the plain observation.
    pub fn new<R: Rng + ?Sized>(
        right: &SoloAgent,
        obs_dim: usize,
        penalty: PenaltyConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_gating_size(right, obs_dim, penalty, GATING_GRU, rng)
    }

    /// Like [`BiHemisphericAgent::new`] with a custom gating GRU width.
    pub fn with_gating_size<R: Rng + ?Sized>(
        right: &SoloAgent,
        obs_dim: usize,
        penalty: PenaltyConfig,
        gating_hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        penalty.validate()?;
        let action_dim = right.action_dim();
        let expected = right.input.input_dim(obs_dim, action_dim);
        if right.net.input_dim() != expected {
            return Err(Error::config(format!(
                "right hemisphere reads {} inputs, the task provides {expected}",
                right.net.input_dim()
            )));
        }
        let left_sizes = HemisphereSizes {
            input_dim: obs_dim,
            ..right.net.sizes()
        };
        Ok(BiHemisphericAgent {
            right: right.net.clone(),
            right_input: right.input,
            left: HemisphereNetwork::new(left_sizes, rng),
            gating: GatingNetwork::new(gating_hidden, rng),
            log_std: initial_log_std(action_dim),
            penalty,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn right_hash(&self) -> [u8; 32] {
        parameter_hash(self.right.tensors())
    }

    pub fn initial_state(&self, rows: usize) -> BihemState {
        BihemState {
            h_right: vec![0.0; rows * self.right.hidden_dim()],
            h_left: vec![0.0; rows * self.left.hidden_dim()],
            h_gate: vec![0.0; rows * self.gating.hidden_dim()],
            gate_input: vec![GatingInput::BOOTSTRAP; rows],
        }
    }

    /// One step for `rows` parallel sequences. With `left_alone` the gating
    /// network is bypassed and `P_left = 1`.
    pub fn step(
        &self,
        left_obs: &[f64],
        right_inputs: &[f64],
        state: &mut BihemState,
        left_alone: bool,
    ) -> Result<BihemStep> {
        let rows = state.gate_input.len();
        let a = self.action_dim();
        let left = self.left.forward(left_obs, &state.h_left)?;
        let right = if left_alone {
            None
        } else {
            Some(self.right.forward(right_inputs, &state.h_right)?)
        };
        let gates: Vec<Gates> = if left_alone {
            vec![Gates::all_left(); rows]
        } else {
            let inputs: Vec<f64> = state.gate_input.iter().flat_map(|g| g.to_array()).collect();
            debug_assert_eq!(inputs.len(), rows * GATING_INPUT_DIM);
            let (logits, h) = self.gating.forward(&inputs, &state.h_gate)?;
            state.h_gate = h;
            logits.into_iter().map(Gates::from_logit).collect()
        };
        let (mu_right, v_right) = match &right {
            Some(r) => (r.mean.clone(), r.value.clone()),
            None => (vec![0.0; rows * a], vec![0.0; rows]),
        };
        let mut mean = Vec::with_capacity(rows * a);
        let mut value = Vec::with_capacity(rows);
        for i in 0..rows {
            let p = gates[i].right;
            mean.extend(compose_mean(p, &mu_right[i * a..(i + 1) * a], &left.mean[i * a..(i + 1) * a]));
            value.push(compose_value(p, v_right[i], left.value[i]));
        }
        let step = BihemStep {
            gates,
            gate_input: state.gate_input.clone(),
            mean,
            mu_right,
            mu_left: left.mean,
            v_right,
            v_left: left.value.clone(),
            value,
        };
        state.h_left = left.hidden;
        if let Some(r) = right {
            state.h_right = r.hidden;
        }
        Ok(step)
    }

    /// Records this step's outcome as the next gating input.
    pub fn observe(state: &mut BihemState, step: &BihemStep, rewards: &[f64]) {
        for (i, gi) in state.gate_input.iter_mut().enumerate() {
            *gi = GatingInput::next(
                step.gates[i].right,
                step.gates[i].left,
                step.v_right[i],
                step.v_left[i],
                rewards[i],
            );
        }
    }

    pub fn save_into(&self, prefix: &str, ck: &mut Checkpoint) {
        self.right.save_into(&format!("{prefix}/right"), ck);
        self.left.save_into(&format!("{prefix}/left"), ck);
        self.gating.save_into(&format!("{prefix}/gating"), ck);
        ck.insert(format!("{prefix}/log_std"), self.log_std.clone());
    }
}

/// Uniform random actions in `[-1, 1]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomAgent {
    pub action_dim: usize,
}

impl RandomAgent {
    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.action_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    }
}

/// The three reference agents.
#[derive(Clone, Debug, PartialEq)]
pub enum Baseline {
    LeftOnly(SoloAgent),
    RightOnly(SoloAgent),
    Random(RandomAgent),
}

/// Builds a baseline. `sizes` describes the left-only network (doubled
/// GRU); the right-only network comes from `checkpoint` under
/// `right_only`.
pub fn make_baseline<R: Rng + ?Sized>(
    kind: AgentKind,
    sizes: HemisphereSizes,
    checkpoint: Option<&Checkpoint>,
    rng: &mut R,
) -> Result<Baseline> {
    match kind {
        AgentKind::LeftOnly => Ok(Baseline::LeftOnly(SoloAgent::new(sizes, InputMode::Plain, rng))),
        AgentKind::RightOnly => {
            let ck = checkpoint.ok_or_else(|| {
                Error::config("right-only baseline needs a meta-training checkpoint; run meta-train first")
            })?;
            Ok(Baseline::RightOnly(SoloAgent::load_from(RIGHT_ONLY_PREFIX, ck)?))
        }
        AgentKind::Random => Ok(Baseline::Random(RandomAgent {
            action_dim: sizes.action_dim,
        })),
        AgentKind::Bihem => Err(Error::usage("the bi-hemispheric agent is not a baseline")),
    }
}

/// Checkpoint prefix of the meta-trained right hemisphere.
pub const RIGHT_HEMISPHERE_PREFIX: &str = "right_hemisphere";
/// Checkpoint prefix of the meta-trained right-only baseline.
pub const RIGHT_ONLY_PREFIX: &str = "right_only";

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn right(rng: &mut ChaCha8Rng) -> SoloAgent {
        SoloAgent::new(HemisphereSizes::hemisphere(12, 3), InputMode::Rl2, rng)
    }

    #[test]
    fn rl2_input_layout() {
        let mut out = Vec::new();
        let prev = PrevStep {
            action: vec![0.1, 0.2, 0.3],
            reward: 5.0,
            done: true,
        };
        InputMode::Rl2.write(&mut out, &[9.0; 7], &prev);
        assert_eq!(out.len(), 7 + 3 + 2);
        assert_eq!(&out[7..], &[0.1, 0.2, 0.3, 0.5, 1.0]);
        assert_eq!(InputMode::Rl2.input_dim(7, 3), 12);
    }

    #[test]
    fn forced_left_reproduces_left_hemisphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let agent = BiHemisphericAgent::new(&right(&mut rng), 7, PenaltyConfig::default(), &mut rng).unwrap();
        let obs: Vec<f64> = (0..14).map(|i| (i as f64 * 0.37).sin()).collect();
        let rin: Vec<f64> = (0..24).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut st = agent.initial_state(2);
        let step = agent.step(&obs, &rin, &mut st, true).unwrap();
        let left = agent.left.forward(&obs, &vec![0.0; 2 * 128]).unwrap();
        for (a, b) in step.mean.iter().zip(&left.mean) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in step.value.iter().zip(&left.value) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn right_input_width_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(BiHemisphericAgent::new(&right(&mut rng), 8, PenaltyConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn right_only_requires_checkpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sizes = HemisphereSizes::baseline(7, 3);
        let err = make_baseline(AgentKind::RightOnly, sizes, None, &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));

        let trained = SoloAgent::new(HemisphereSizes::baseline(12, 3), InputMode::Rl2, &mut rng);
        let mut ck = Checkpoint::new();
        trained.save_into(RIGHT_ONLY_PREFIX, &mut ck);
        match make_baseline(AgentKind::RightOnly, sizes, Some(&ck), &mut rng).unwrap() {
            Baseline::RightOnly(a) => assert_eq!(a, trained),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kinds_parse() {
        for k in AgentKind::ALL {
            assert_eq!(k.as_str().parse::<AgentKind>().unwrap(), k);
        }
        assert!(AgentKind::Bihem.learns() && !AgentKind::Random.learns());
    }
}
