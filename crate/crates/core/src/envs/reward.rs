//! Reward shaping for the whole suite, in one place.
//!
//! Every task pays `10` on a step where its success predicate holds and a
//! smooth bounded value strictly below `10` otherwise. The basic shape is
//!
//! ```text
//! shaped(d) = 10 * exp(-d / 0.25)
//! ```
//!
//! applied to the task's primary distance. Two-phase tasks mix an approach
//! term (effector to object or handle) with the main term:
//!
//! | family          | non-success reward                                        |
//! |-----------------|-----------------------------------------------------------|
//! | reach           | `shaped(|eff - goal|)`                                    |
//! | push/pick-place | `0.25 shaped(|eff - obj|) + 0.75 shaped(|obj - goal|)`    |
//! | button-press    | `shaped(|eff - pad|) * (0.5 + 0.4 grip)`                  |
//! | faucet/door     | `3 exp(-|eff - handle| / 0.25) + 7 * swept / target`    |
//!
//! Success: the primary distance is below [`SUCCESS_DISTANCE`]; for the
//! button the grip must also exceed [`PRESS_GRIP`]; for faucet and door the
//! swept angle must reach its target.

pub const SCALE: f64 = 0.25;
pub const MAX_REWARD: f64 = 10.0;
pub const SUCCESS_DISTANCE: f64 = 0.05;
pub const PRESS_GRIP: f64 = 0.8;
pub const APPROACH_WEIGHT: f64 = 0.25;
pub const JOINT_APPROACH_WEIGHT: f64 = 0.3;

pub fn shaped(d: f64) -> f64 {
    MAX_REWARD * (-d / SCALE).exp()
}

pub fn reach(d_goal: f64) -> (f64, bool) {
    let success = d_goal < SUCCESS_DISTANCE;
    (if success { MAX_REWARD } else { shaped(d_goal) }, success)
}

pub fn two_phase(d_approach: f64, d_goal: f64) -> (f64, bool) {
    let success = d_goal < SUCCESS_DISTANCE;
    let r = APPROACH_WEIGHT * shaped(d_approach) + (1.0 - APPROACH_WEIGHT) * shaped(d_goal);
    (if success { MAX_REWARD } else { r }, success)
}

pub fn press(d_pad: f64, grip: f64) -> (f64, bool) {
    let success = d_pad < SUCCESS_DISTANCE && grip > PRESS_GRIP;
    let r = shaped(d_pad) * (0.5 + 0.4 * grip.clamp(0.0, 1.0));
    (if success { MAX_REWARD } else { r }, success)
}

pub fn joint(d_handle: f64, swept_fraction: f64) -> (f64, bool) {
    let frac = swept_fraction.clamp(0.0, 1.0);
    let success = swept_fraction >= 1.0;
    let r = MAX_REWARD
        * (JOINT_APPROACH_WEIGHT * (-d_handle / SCALE).exp() + (1.0 - JOINT_APPROACH_WEIGHT) * frac);
    (if success { MAX_REWARD } else { r.min(MAX_REWARD) }, success)
}
