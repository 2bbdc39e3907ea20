//! Agents: the bi-hemispheric agent and its baselines.
//!
//! A hemisphere is a GRU trunk with a Gaussian-mean policy head and a value
//! head. The bi-hemispheric agent blends a frozen, meta-trained right
//! hemisphere with a trainable left hemisphere using per-step
//! responsibilities from a gating network:
//!
//! ```text
//! P_left  = sigmoid(gating(prev gates, value errors))
//! P_right = 1 - P_left
//! mu      = P_right mu_right + P_left mu_left
//! V       = P_right V_right  + P_left V_left
//! ```

mod agents;
pub mod compose;
pub mod gating;
pub mod hemisphere;
pub mod policy;

pub use agents::{
    make_baseline, parameter_hash, AgentKind, Baseline, BiHemisphericAgent, BihemState, BihemStep,
    InputMode, PrevStep, RandomAgent, SoloAgent, RIGHT_HEMISPHERE_PREFIX, RIGHT_ONLY_PREFIX,
};
pub use compose::{
    compose_graph, compose_mean, compose_policy, compose_value, hemispheric_penalty,
    penalty_from_logit, PenaltyConfig,
};
pub use gating::{Gates, GatingInput, GatingNetwork, GatingVars, GATING_GRU, GATING_INPUT_DIM};
pub use hemisphere::{
    HemisphereNetwork, HemisphereOutput, HemisphereSizes, HemisphereVars, SequenceOutput,
    BASELINE_GRU, HEMISPHERE_GRU, POLICY_HEAD_WIDTH,
};
pub use policy::{clip_action, entropy_graph, log_prob, log_prob_graph, GaussianPolicy, INITIAL_LOG_STD};
