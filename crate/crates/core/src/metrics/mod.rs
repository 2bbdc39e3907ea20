//! Evaluation metrics: medians, the initial and final relative rewards
//! (IRR, FRR), rolling-median smoothing and the IRR-vs-FRR quadrants.
//!
//! ```text
//! IRR = median(R^bihem_{t <= k})          / median(R^left-only_{t <= k})
//! FRR = median(R^left-alone_{t >= T - k}) / median(R^left-only_{t >= T - k})
//! ```
//!
//! Rewards are raw per-batch mean rewards; normalisation never reaches
//! these functions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::AgentKind;
use crate::envs::TaskName;
use crate::error::{Error, Result};

/// Median of `values`; even lengths average the two central values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::usage("median of an empty set"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::numeric("median of a set containing NaN"));
    }
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        return Ok(upper);
    }
    let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(lower + (upper - lower) / 2.0)
}

/// Rewards indexed by environment step, for one agent on one task and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSeries {
    pub agent: AgentKind,
    pub task: TaskName,
    pub seed: u64,
    points: Vec<(u64, f64)>,
}

impl RewardSeries {
    pub fn new(agent: AgentKind, task: TaskName, seed: u64, points: Vec<(u64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::config("reward series steps must be strictly increasing"));
        }
        if points.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::numeric("reward series contains a non-finite reward"));
        }
        Ok(RewardSeries {
            agent,
            task,
            seed,
            points,
        })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn rewards_where(&self, keep: impl Fn(u64) -> bool) -> Vec<f64> {
        self.points.iter().filter(|p| keep(p.0)).map(|p| p.1).collect()
    }

    /// The same series with every reward multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        RewardSeries {
            points: self.points.iter().map(|&(s, r)| (s, r * c)).collect(),
            ..self.clone()
        }
    }
}

/// Window length `k` out of `total` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricWindow {
    pub k: u64,
    pub total: u64,
}

impl MetricWindow {
    pub fn new(k: u64, total: u64) -> Result<Self> {
        if k == 0 || k > total {
            return Err(Error::config(format!("metric window needs 0 < k <= T, got k={k}, T={total}")));
        }
        Ok(MetricWindow { k, total })
    }

    /// `k = round(fraction * total)`.
    pub fn from_fraction(fraction: f64, total: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!("metric window fraction must lie in (0, 1], got {fraction}")));
        }
        Self::new(((fraction * total as f64).round() as u64).max(1), total)
    }

    pub fn initial(&self, step: u64) -> bool {
        step <= self.k
    }

    pub fn last(&self, step: u64) -> bool {
        step >= self.total - self.k
    }
}

/// A ratio of medians, or the reason it does not exist.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum MetricValue {
    Defined(f64),
    /// The denominator median was not positive.
    Undefined,
}

impl MetricValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(*v),
            MetricValue::Undefined => None,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Defined(v) => write!(f, "{v}"),
            MetricValue::Undefined => f.write_str("undefined"),
        }
    }
}

fn ratio_of_medians(num: &[f64], den: &[f64], what: &str) -> Result<MetricValue> {
    if num.is_empty() || den.is_empty() {
        return Err(Error::usage(format!("{what}: a series has no samples inside the window")));
    }
    let d = median(den)?;
    if d <= 0.0 {
        return Ok(MetricValue::Undefined);
    }
    Ok(MetricValue::Defined(median(num)? / d))
}

/// Initial relative reward over steps `t <= k`.
pub fn irr(bihem: &RewardSeries, left_only: &RewardSeries, w: MetricWindow) -> Result<MetricValue> {
    ratio_of_medians(
        &bihem.rewards_where(|s| w.initial(s)),
        &left_only.rewards_where(|s| w.initial(s)),
        "irr",
    )
}

/// Final relative reward over steps `t >= T - k`; the numerator is the left
/// hemisphere acting alone.
pub fn frr(left_alone: &RewardSeries, left_only: &RewardSeries, w: MetricWindow) -> Result<MetricValue> {
    ratio_of_medians(
        &left_alone.rewards_where(|s| w.last(s)),
        &left_only.rewards_where(|s| w.last(s)),
        "frr",
    )
}

/// Trailing rolling median: each point becomes the median of all points in
/// `(step - window_steps, step]`.
pub fn rolling_median(series: &RewardSeries, window_steps: u64) -> Result<RewardSeries> {
    if window_steps == 0 {
        return Err(Error::config("rolling-median window must be positive"));
    }
    let pts = &series.points;
    let mut out = Vec::with_capacity(pts.len());
    let mut start = 0;
    for (i, &(s, _)) in pts.iter().enumerate() {
        while s - pts[start].0 >= window_steps {
            start += 1;
        }
        let window: Vec<f64> = pts[start..=i].iter().map(|p| p.1).collect();
        out.push((s, median(&window)?));
    }
    Ok(RewardSeries {
        points: out,
        ..series.clone()
    })
}

/// Position of a task in the IRR (x) vs FRR (y) plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    /// Both objectives met.
    UpperRight,
    /// Final performance only.
    UpperLeft,
    /// Initial performance only.
    LowerRight,
    LowerLeft,
    /// IRR or FRR exactly 1.
    Boundary,
    Undefined,
}

impl Quadrant {
    pub fn classify(irr: MetricValue, frr: MetricValue) -> Self {
        let (Some(i), Some(f)) = (irr.value(), frr.value()) else {
            return Quadrant::Undefined;
        };
        if i == 1.0 || f == 1.0 {
            return Quadrant::Boundary;
        }
        match (i > 1.0, f > 1.0) {
            (true, true) => Quadrant::UpperRight,
            (false, true) => Quadrant::UpperLeft,
            (true, false) => Quadrant::LowerRight,
            (false, false) => Quadrant::LowerLeft,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::UpperRight => "upper-right",
            Quadrant::UpperLeft => "upper-left",
            Quadrant::LowerRight => "lower-right",
            Quadrant::LowerLeft => "lower-left",
            Quadrant::Boundary => "boundary",
            Quadrant::Undefined => "undefined",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Median of per-seed metric values; any undefined seed makes the result
/// undefined.
pub fn median_metric(values: &[MetricValue]) -> Result<MetricValue> {
    let defined: Option<Vec<f64>> = values.iter().map(|v| v.value()).collect();
    match defined {
        Some(v) => Ok(MetricValue::Defined(median(&v)?)),
        None => Ok(MetricValue::Undefined),
    }
}

/// Labels every task by the quadrant of its (median IRR, median FRR).
pub fn quadrant_summary(
    per_task: &BTreeMap<TaskName, (MetricValue, MetricValue)>,
) -> BTreeMap<TaskName, Quadrant> {
    per_task
        .iter()
        .map(|(t, (i, f))| (*t, Quadrant::classify(*i, *f)))
        .collect()
}
