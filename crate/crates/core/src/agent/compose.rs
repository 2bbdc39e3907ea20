//! Blending of the two hemispheres and the responsibility penalty.
//!
//! ```text
//! P_right = 1 - P_left,                 P_left, P_right in [0, 1]
//! V       = P_right V_right + P_left V_left
//! pi      = N(P_right mu_right + P_left mu_left, sigma^2)
//! penalty = beta * min(P_right / P_left, cap)^alpha
//! ```

use serde::{Deserialize, Serialize};

use super::policy::GaussianPolicy;
use crate::autodiff::{Graph, Var};
use crate::envs::TaskName;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Upper bound on `P_right / P_left`; the ratio is unbounded as
    /// `P_left -> 0`.
    #[serde(default = "default_cap")]
    pub ratio_cap: f64,
}

fn default_cap() -> f64 {
    1e3
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            alpha: 0.75,
            beta: 5.0,
            ratio_cap: default_cap(),
        }
    }
}

impl PenaltyConfig {
    /// Per-task values: `alpha = 1` for door opening, `0.75` elsewhere.
    pub fn for_task(task: TaskName) -> Self {
        let alpha = if task == TaskName::DoorOpen { 1.0 } else { 0.75 };
        PenaltyConfig {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::config(format!("penalty alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config(format!("penalty beta must be >= 0, got {}", self.beta)));
        }
        if !(self.ratio_cap > 0.0) {
            return Err(Error::config(format!("ratio cap must be > 0, got {}", self.ratio_cap)));
        }
        Ok(())
    }
}

pub fn compose_value(p_right: f64, v_right: f64, v_left: f64) -> f64 {
    p_right * v_right + (1.0 - p_right) * v_left
}

pub fn compose_mean(p_right: f64, mu_right: &[f64], mu_left: &[f64]) -> Vec<f64> {
    let p_left = 1.0 - p_right;
    mu_right
        .iter()
        .zip(mu_left)
        .map(|(r, l)| p_right * r + p_left * l)
        .collect()
}

pub fn compose_policy(
    p_right: f64,
    mu_right: &[f64],
    mu_left: &[f64],
    log_std: &[f64],
) -> Result<GaussianPolicy> {
    if mu_right.len() != mu_left.len() {
        return Err(Error::config("hemisphere means have different lengths"));
    }
    GaussianPolicy::new(compose_mean(p_right, mu_right, mu_left), log_std.to_vec())
}

pub fn hemispheric_penalty(p_right: f64, p_left: f64, cfg: &PenaltyConfig) -> f64 {
    if p_right == 0.0 {
        return 0.0;
    }
    let ratio = if p_left > 0.0 { p_right / p_left } else { f64::INFINITY };
    cfg.beta * ratio.min(cfg.ratio_cap).powf(cfg.alpha)
}

/// Penalty per row from the gating head logit `z` (`P_left = sigmoid(z)`).
///
/// `P_right / P_left = exp(-z)` exactly, so the capped penalty is
/// `beta * exp(-alpha * max(z, -ln cap))`, which avoids dividing by a
/// vanishing `P_left`.
pub fn penalty_from_logit(g: &mut Graph, logit: Var, cfg: &PenaltyConfig) -> Var {
    let floor = -cfg.ratio_cap.ln();
    let z = g.clamp(logit, floor, f64::INFINITY);
    let e = g.scale(z, -cfg.alpha);
    let e = g.exp(e);
    g.scale(e, cfg.beta)
}

/// Blends `[n x d]` hemisphere outputs with per-row right responsibility
/// `p_right [n x 1]`.
pub fn compose_graph(g: &mut Graph, p_right: Var, right: Var, left: Var) -> Result<Var> {
    let p_left = g.one_minus(p_right);
    let a = g.mul_col(p_right, right)?;
    let b = g.mul_col(p_left, left)?;
    g.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_endpoints_and_arithmetic() {
        assert_eq!(compose_value(0.0, 4.0, -2.0), -2.0);
        assert_eq!(compose_value(1.0, 4.0, -2.0), 4.0);
        assert!((compose_value(0.3, 10.0, 0.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn policy_symmetry_and_endpoint() {
        let p = compose_policy(0.5, &[1.0; 3], &[-1.0; 3], &[-0.5; 3]).unwrap();
        assert_eq!(p.mean, vec![0.0; 3]);
        let p = compose_policy(1.0, &[0.2, 0.3, 0.4], &[9.0; 3], &[-0.5; 3]).unwrap();
        assert_eq!(p.mean, vec![0.2, 0.3, 0.4]);
    }

    #[test]
    fn penalty_reference_values() {
        let cfg = PenaltyConfig::default();
        assert_eq!(hemispheric_penalty(0.0, 1.0, &cfg), 0.0);
        assert!((hemispheric_penalty(0.5, 0.5, &cfg) - 5.0).abs() < 1e-12);
        let expected = 5.0 * 2f64.powf(1.5); // 5 * 4^0.75
        assert!((hemispheric_penalty(0.8, 0.2, &cfg) - expected).abs() < 1e-9);
        assert!((expected - 14.142_135_623_730_951).abs() < 1e-12);
        // P_left = 0 saturates at the cap.
        assert!((hemispheric_penalty(1.0, 0.0, &cfg) - 5.0 * 1e3f64.powf(0.75)).abs() < 1e-9);
    }

    #[test]
    fn door_uses_linear_penalty() {
        assert_eq!(PenaltyConfig::for_task(TaskName::DoorOpen).alpha, 1.0);
        assert_eq!(PenaltyConfig::for_task(TaskName::Push).alpha, 0.75);
        assert_eq!(PenaltyConfig::for_task(TaskName::Push).beta, 5.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = PenaltyConfig::default();
        c.beta = -1.0;
        assert!(c.validate().is_err());
        c.beta = 0.0;
        assert!(c.validate().is_ok());
        c.alpha = 0.0;
        assert!(c.validate().is_err());
    }
}
