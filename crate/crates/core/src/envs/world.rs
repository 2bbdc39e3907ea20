use super::geometry::{add, clamp_arena, cross, dist, dot, sub, wrap_angle, Vec2};
use super::reward;
use super::task::{Mechanics, ObservationLayout, SubTask, START};
use crate::error::{Error, Result};

/// Effector displacement per unit action.
pub const SPEED: f64 = 0.05;
/// Distance within which the effector touches an object or handle.
pub const CONTACT_RADIUS: f64 = 0.1;
pub const GRASP_GRIP: f64 = 0.5;
pub const ACTION_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// One running episode of a sub-task. Kinematic point dynamics only.
#[derive(Clone, Debug)]
pub struct PointWorld {
    sub: SubTask,
    layout: ObservationLayout,
    episode_length: usize,
    effector: Vec2,
    grip: f64,
    object: Option<Vec2>,
    attached: bool,
    angle: f64,
    steps: usize,
}

impl PointWorld {
    pub fn new(sub: SubTask, layout: ObservationLayout, episode_length: usize) -> Result<Self> {
        sub.validate()?;
        layout.validate()?;
        if episode_length == 0 {
            return Err(Error::config("episode length must be positive"));
        }
        let angle = sub.joint.map_or(0.0, |j| j.start_angle);
        Ok(PointWorld {
            object: sub.object,
            sub,
            layout,
            episode_length,
            effector: START,
            grip: 0.0,
            attached: false,
            angle,
            steps: 0,
        })
    }

    pub fn subtask(&self) -> &SubTask {
        &self.sub
    }

    pub fn obs_dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn steps_per_episode(&self) -> usize {
        self.episode_length
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn effector(&self) -> Vec2 {
        self.effector
    }

    pub fn object(&self) -> Option<Vec2> {
        self.object
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.episode_length
    }

    /// Puts the world back at the start of the sub-task.
    pub fn reset(&mut self) -> Vec<f64> {
        self.effector = START;
        self.grip = 0.0;
        self.object = self.sub.object;
        self.attached = false;
        self.angle = self.sub.joint.map_or(0.0, |j| j.start_angle);
        self.steps = 0;
        self.observation()
    }

    /// Starts a new episode on a different sub-task.
    pub fn reset_to(&mut self, sub: SubTask) -> Result<Vec<f64>> {
        sub.validate()?;
        self.sub = sub;
        Ok(self.reset())
    }

    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.layout.dim());
        obs.extend_from_slice(&self.effector);
        obs.push(self.grip);
        obs.extend_from_slice(&self.object.unwrap_or([0.0, 0.0]));
        if self.layout.goal_visible {
            obs.extend_from_slice(&self.sub.goal);
        } else {
            obs.extend_from_slice(&[0.0, 0.0]);
        }
        let start = obs.len();
        obs.resize(start + self.layout.task_slots, 0.0);
        if self.layout.one_hot {
            obs[start + self.sub.task.index()] = 1.0;
        }
        obs
    }

    fn blocked(&self, from: Vec2, to: Vec2) -> bool {
        self.sub.obstacles.iter().any(|w| w.crosses(from, to))
    }

    /// Advances one step. Actions are clipped to `[-1, 1]^3`: `(dx, dy, grip)`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::usage("step after the episode finished; call reset"));
        }
        if action.len() != ACTION_DIM {
            return Err(Error::config(format!(
                "action has {} entries, expected {ACTION_DIM}",
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::numeric(format!("non-finite action {action:?}")));
        }
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        self.grip = (a[2] + 1.0) / 2.0;

        let old = self.effector;
        let mut target = clamp_arena([old[0] + SPEED * a[0], old[1] + SPEED * a[1]]);
        let mech = self.sub.task.mechanics();

        if mech == Mechanics::PickPlace {
            if self.attached && self.grip < GRASP_GRIP {
                self.attached = false;
            } else if !self.attached
                && self.grip > GRASP_GRIP
                && self.object.is_some_and(|o| dist(old, o) < CONTACT_RADIUS)
            {
                self.attached = true;
            }
        }

        if self.blocked(old, target) {
            target = old;
        }
        if self.attached {
            let obj = self.object.expect("attached implies an object");
            let moved = clamp_arena(add(obj, sub(target, old)));
            if self.blocked(obj, moved) {
                target = old;
            } else {
                self.object = Some(moved);
            }
        }
        let delta = sub(target, old);
        self.effector = target;

        match mech {
            Mechanics::Push => {
                if let Some(obj) = self.object {
                    let toward = dot(delta, sub(obj, old)) > 0.0;
                    if toward && dist(old, obj) < CONTACT_RADIUS {
                        let moved = clamp_arena(add(obj, delta));
                        if !self.blocked(obj, moved) {
                            self.object = Some(moved);
                        }
                    }
                }
            }
            Mechanics::FaucetRotate | Mechanics::DoorOpen => {
                let joint = self.sub.joint.expect("joint tasks carry a joint");
                let before = sub(old, joint.pivot);
                let after = sub(target, joint.pivot);
                let contact = if mech == Mechanics::FaucetRotate {
                    self.grip > GRASP_GRIP && dist(old, joint.tip(self.angle)) < CONTACT_RADIUS
                } else {
                    let tip = joint.tip(self.angle);
                    super::geometry::point_segment_distance(old, joint.pivot, tip) < CONTACT_RADIUS
                        && dist(old, joint.pivot) > CONTACT_RADIUS / 2.0
                };
                // Only counter-clockwise motion turns the joint.
                if contact && cross(before, delta) > 0.0 {
                    let turn = wrap_angle(after[1].atan2(after[0]) - before[1].atan2(before[0]));
                    if turn > 0.0 {
                        self.angle += turn;
                    }
                }
                self.object = Some(joint.tip(self.angle));
            }
            Mechanics::Reach | Mechanics::PickPlace | Mechanics::ButtonPress => {}
        }

        let (r, success) = self.score();
        self.steps += 1;
        Ok(StepResult {
            observation: self.observation(),
            reward: r,
            done: self.is_done(),
            success,
        })
    }

    /// Reward and success for the current state.
    pub fn score(&self) -> (f64, bool) {
        let eff = self.effector;
        match self.sub.task.mechanics() {
            Mechanics::Reach => reward::reach(dist(eff, self.sub.goal)),
            Mechanics::Push | Mechanics::PickPlace => {
                let obj = self.object.expect("object tasks carry an object");
                reward::two_phase(dist(eff, obj), dist(obj, self.sub.goal))
            }
            Mechanics::ButtonPress => reward::press(dist(eff, self.sub.goal), self.grip),
            Mechanics::FaucetRotate | Mechanics::DoorOpen => {
                let joint = self.sub.joint.expect("joint tasks carry a joint");
                let handle = joint.tip(self.angle);
                let swept = (self.angle - joint.start_angle) / joint.target_sweep;
                reward::joint(dist(eff, handle), swept)
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn set_effector(&mut self, p: Vec2) {
        self.effector = p;
    }
}

/// Outcome summary of a finished episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub total_reward: f64,
    pub mean_reward: f64,
    pub success: bool,
}

/// Fraction of episodes that succeeded at any step.
pub fn success_rate(results: &[EpisodeOutcome]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::usage("success rate of an empty episode list"));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}
