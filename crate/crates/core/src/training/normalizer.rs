use crate::error::{Error, Result};

/// Running reward standardisation with Welford's algorithm (population
/// variance).
#[derive(Clone, Debug, PartialEq)]
pub struct RewardNormalizer {
    enabled: bool,
    count: u64,
    mean: f64,
    m2: f64,
}

pub const NORMALIZER_EPSILON: f64 = 1e-8;

impl RewardNormalizer {
    pub fn new(enabled: bool) -> Self {
        RewardNormalizer {
            enabled,
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    /// Folds `r` into the running statistics, then standardises it.
    pub fn normalize(&mut self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::numeric(format!("non-finite reward {r}")));
        }
        if !self.enabled {
            return Ok(r);
        }
        self.count += 1;
        let delta = r - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (r - self.mean);
        Ok(self.apply(r))
    }

    /// Standardises with the current statistics, leaving them unchanged.
    pub fn apply(&self, r: f64) -> f64 {
        if !self.enabled {
            return r;
        }
        (r - self.mean) / (self.variance() + NORMALIZER_EPSILON).sqrt()
    }
}

/// Free-function form of [`RewardNormalizer::normalize`].
pub fn normalize_reward(r: f64, state: &mut RewardNormalizer) -> Result<f64> {
    state.normalize(r)
}
