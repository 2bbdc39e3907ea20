//! PointWorld: a tiered 2D continuous-control task suite.
//!
//! Tier 1 varies only goal and object positions between sub-tasks
//! (`reach`, `push`, `pick-place`). Tier 2 adds walls or bins to a tier-1
//! family (`reach-wall`, `push-wall`, `bin-picking`). Tier 3 asks for
//! qualitatively different control (`button-press`, `faucet-rotate`,
//! `door-open`). All tasks share a 3-dimensional action space
//! `(dx, dy, grip)` and one observation layout.

pub mod geometry;
pub mod reward;
mod task;
mod world;

pub use geometry::{Segment, Vec2};
pub use task::{
    generate_subtask, Joint, Mechanics, ObservationLayout, PoolStream, SubTask, SubTaskPool,
    TaskName, TaskSpec, DEFAULT_EPISODE_LENGTH, DEFAULT_POOL_SIZE, MIN_SEPARATION, START,
};
pub use world::{success_rate, EpisodeOutcome, PointWorld, StepResult, ACTION_DIM, CONTACT_RADIUS, SPEED};
