use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

pub const INITIAL_LOG_STD: f64 = -0.5;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8; // 0.5 * ln(2 pi)

/// Diagonal Gaussian with state-independent log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::config(format!(
                "mean has {} entries, log-std {}",
                mean.len(),
                log_std.len()
            )));
        }
        Ok(GaussianPolicy { mean, log_std })
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| (2.0 * l).exp()).collect()
    }

    /// Unclipped sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, l)| {
                let n: f64 = rng.sample(StandardNormal);
                m + l.exp() * n
            })
            .collect()
    }

    pub fn log_prob(&self, action: &[f64]) -> f64 {
        log_prob(action, &self.mean, &self.log_std)
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 + HALF_LN_TAU).sum()
    }
}

pub fn log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), l)| {
            let z = (a - m) * (-l).exp();
            -0.5 * z * z - l - HALF_LN_TAU
        })
        .sum()
}

/// Clips a sampled action into the environment's box.
pub fn clip_action(action: &[f64]) -> Vec<f64> {
    action.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
}

/// Per-row log density `[n x 1]` of fixed `actions [n x d]` under
/// `N(mean [n x d], exp(log_std [1 x d])^2)`.
pub fn log_prob_graph(g: &mut Graph, actions: Var, mean: Var, log_std: Var) -> Result<Var> {
    let n = g.value(mean).rows();
    let d = g.value(mean).cols();
    let diff = g.sub(actions, mean)?;
    let neg = g.scale(log_std, -1.0);
    let inv_std = g.exp(neg);
    let inv_std = g.broadcast_rows(inv_std, n)?;
    let z = g.mul(diff, inv_std)?;
    let z2 = g.square(z);
    let quad = g.sum_cols(z2);
    let quad = g.scale(quad, -0.5);
    let ls_sum = g.sum(log_std);
    let ls_sum = g.broadcast_rows(ls_sum, n)?;
    let lp = g.sub(quad, ls_sum)?;
    Ok(g.add_scalar(lp, -(d as f64) * HALF_LN_TAU))
}

/// Entropy of the diagonal Gaussian as a graph scalar.
pub fn entropy_graph(g: &mut Graph, log_std: Var) -> Var {
    let d = g.value(log_std).len() as f64;
    let s = g.sum(log_std);
    g.add_scalar(s, d * (0.5 + HALF_LN_TAU))
}
