use crate::error::{Error, Result};

/// Generalised advantage estimation over one flat sequence.
///
/// `dones[t]` marks the last step of an episode; the value after it is
/// taken to be 0, and the recursion restarts. Returns `(advantages,
/// returns)` with `returns = advantages + values`.
///
/// ```text
/// delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
/// A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
/// ```
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::usage(format!(
            "gae inputs differ in length: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * cont - values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
