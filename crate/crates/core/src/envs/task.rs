use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{dist, Segment, Vec2};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Effector start position for every task.
pub const START: Vec2 = [0.0, -0.8];
/// Minimum distance between goal and object (and between goal and start).
pub const MIN_SEPARATION: f64 = 0.2;
pub const DEFAULT_POOL_SIZE: usize = 20;
pub const DEFAULT_EPISODE_LENGTH: usize = 200;

/// The nine tasks of the suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    Reach,
    Push,
    PickPlace,
    ReachWall,
    PushWall,
    BinPicking,
    ButtonPress,
    FaucetRotate,
    DoorOpen,
}

/// The dynamics/reward family a task runs on. Tier-2 tasks reuse the
/// family of their tier-1 counterpart and only add obstacles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mechanics {
    Reach,
    Push,
    PickPlace,
    ButtonPress,
    FaucetRotate,
    DoorOpen,
}

impl TaskName {
    pub const ALL: [TaskName; 9] = [
        TaskName::Reach,
        TaskName::Push,
        TaskName::PickPlace,
        TaskName::ReachWall,
        TaskName::PushWall,
        TaskName::BinPicking,
        TaskName::ButtonPress,
        TaskName::FaucetRotate,
        TaskName::DoorOpen,
    ];

    pub fn tier(self) -> u8 {
        match self {
            TaskName::Reach | TaskName::Push | TaskName::PickPlace => 1,
            TaskName::ReachWall | TaskName::PushWall | TaskName::BinPicking => 2,
            TaskName::ButtonPress | TaskName::FaucetRotate | TaskName::DoorOpen => 3,
        }
    }

    pub fn mechanics(self) -> Mechanics {
        match self {
            TaskName::Reach | TaskName::ReachWall => Mechanics::Reach,
            TaskName::Push | TaskName::PushWall => Mechanics::Push,
            TaskName::PickPlace | TaskName::BinPicking => Mechanics::PickPlace,
            TaskName::ButtonPress => Mechanics::ButtonPress,
            TaskName::FaucetRotate => Mechanics::FaucetRotate,
            TaskName::DoorOpen => Mechanics::DoorOpen,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Reach => "reach",
            TaskName::Push => "push",
            TaskName::PickPlace => "pick-place",
            TaskName::ReachWall => "reach-wall",
            TaskName::PushWall => "push-wall",
            TaskName::BinPicking => "bin-picking",
            TaskName::ButtonPress => "button-press",
            TaskName::FaucetRotate => "faucet-rotate",
            TaskName::DoorOpen => "door-open",
        }
    }

    pub fn index(self) -> usize {
        TaskName::ALL.iter().position(|&t| t == self).expect("listed")
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown task {s:?}")))
    }
}

/// What the observation vector contains beyond the fixed seven slots
/// (effector xy, grip, object xy, goal xy).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationLayout {
    /// Extra slots appended after the fixed part.
    #[serde(default)]
    pub task_slots: usize,
    /// Fill the extra slots with a one-hot task code instead of zeros.
    #[serde(default)]
    pub one_hot: bool,
    /// Report the goal position; when false the goal slots are zero.
    #[serde(default = "yes")]
    pub goal_visible: bool,
}

fn yes() -> bool {
    true
}

impl Default for ObservationLayout {
    fn default() -> Self {
        ObservationLayout {
            task_slots: 0,
            one_hot: false,
            goal_visible: true,
        }
    }
}

impl ObservationLayout {
    pub const FIXED_DIM: usize = 7;

    pub fn dim(&self) -> usize {
        Self::FIXED_DIM + self.task_slots
    }

    /// Two layouts can feed the same network when their vectors have the
    /// same length and meaning of slots.
    pub fn compatible(&self, other: &ObservationLayout) -> bool {
        self.task_slots == other.task_slots && self.one_hot == other.one_hot
    }

    pub fn validate(&self) -> Result<()> {
        if self.one_hot && self.task_slots < TaskName::ALL.len() {
            return Err(Error::config(format!(
                "one-hot task code needs {} slots, layout has {}",
                TaskName::ALL.len(),
                self.task_slots
            )));
        }
        Ok(())
    }
}

/// A rotating joint: the faucet handle or the door leaf.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub pivot: Vec2,
    pub radius: f64,
    pub start_angle: f64,
    /// Counter-clockwise sweep needed for success, in radians.
    pub target_sweep: f64,
}

impl Joint {
    pub fn tip(&self, angle: f64) -> Vec2 {
        [
            self.pivot[0] + self.radius * angle.cos(),
            self.pivot[1] + self.radius * angle.sin(),
        ]
    }
}

/// One parametric instantiation of a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubTask {
    pub task: TaskName,
    pub goal: Vec2,
    pub object: Option<Vec2>,
    pub obstacles: Vec<Segment>,
    pub joint: Option<Joint>,
    pub seed: u64,
}

impl SubTask {
    pub fn validate(&self) -> Result<()> {
        let inside = |p: &Vec2| p.iter().all(|v| (-1.0..=1.0).contains(v));
        if !inside(&self.goal) || self.object.as_ref().is_some_and(|o| !inside(o)) {
            return Err(Error::config(format!("{}: position outside the arena", self.task)));
        }
        if let Some(o) = self.object {
            if dist(o, self.goal) < MIN_SEPARATION {
                return Err(Error::config(format!(
                    "{}: goal and object closer than {MIN_SEPARATION}",
                    self.task
                )));
            }
        }
        Ok(())
    }
}

/// Which family of pools a sub-task belongs to. Different streams draw from
/// different seeds, which keeps meta-training sub-tasks apart from the ones
/// used later.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolStream {
    MetaTrain,
    Main,
    HeldOut,
}

impl PoolStream {
    fn tag(self) -> &'static str {
        match self {
            PoolStream::MetaTrain => "meta-train",
            PoolStream::Main => "main",
            PoolStream::HeldOut => "held-out",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub tier: u8,
    pub pool_size: usize,
    pub pool_seed: u64,
    pub episode_length: usize,
    pub layout: ObservationLayout,
}

impl TaskSpec {
    pub fn new(name: TaskName) -> Self {
        TaskSpec {
            name,
            tier: name.tier(),
            pool_size: DEFAULT_POOL_SIZE,
            pool_seed: 0,
            episode_length: DEFAULT_EPISODE_LENGTH,
            layout: ObservationLayout::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tier != self.name.tier() {
            return Err(Error::config(format!(
                "task {} is tier {}, config says {}",
                self.name,
                self.name.tier(),
                self.tier
            )));
        }
        if self.episode_length == 0 {
            return Err(Error::config(format!("{}: episode length must be positive", self.name)));
        }
        self.layout.validate()
    }

    pub fn obs_dim(&self) -> usize {
        self.layout.dim()
    }

    /// Builds the fixed pool of `pool_size` sub-tasks for `stream`.
    pub fn pool(&self, stream: PoolStream) -> Result<SubTaskPool> {
        self.validate()?;
        if self.pool_size == 0 {
            return Err(Error::config(format!("{}: sub-task pool is empty", self.name)));
        }
        let base = self.pool_seed.to_string();
        let subtasks = (0..self.pool_size)
            .map(|i| {
                let seed = derive_seed(&[stream.tag(), self.name.as_str(), &base, &i.to_string()]);
                generate_subtask(self.name, seed)
            })
            .collect();
        Ok(SubTaskPool { subtasks })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubTaskPool {
    subtasks: Vec<SubTask>,
}

impl SubTaskPool {
    pub fn from_subtasks(subtasks: Vec<SubTask>) -> Result<Self> {
        if subtasks.is_empty() {
            return Err(Error::config("sub-task pool is empty"));
        }
        Ok(SubTaskPool { subtasks })
    }

    /// Uniform draw from the pool.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &SubTask {
        &self.subtasks[rng.gen_range(0..self.subtasks.len())]
    }

    pub fn subtasks(&self) -> &[SubTask] {
        &self.subtasks
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn point(rng: &mut ChaCha8Rng, x: (f64, f64), y: (f64, f64)) -> Vec2 {
    [uniform(rng, x.0, x.1), uniform(rng, y.0, y.1)]
}

fn in_box(p: Vec2, lim: f64) -> bool {
    p[0].abs() <= lim && p[1].abs() <= lim
}

/// U-shaped bin open towards +y, centred on `c`.
fn bin_walls(c: Vec2) -> Vec<Segment> {
    let (hw, hh) = (0.12, 0.1);
    vec![
        Segment::new([c[0] - hw, c[1] - hh], [c[0] - hw, c[1] + hh]),
        Segment::new([c[0] + hw, c[1] - hh], [c[0] + hw, c[1] + hh]),
        Segment::new([c[0] - hw, c[1] - hh], [c[0] + hw, c[1] - hh]),
    ]
}

/// Draws one sub-task; fully determined by `(task, seed)`.
pub fn generate_subtask(task: TaskName, seed: u64) -> SubTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = SubTask {
        task,
        goal: [0.0, 0.0],
        object: None,
        obstacles: Vec::new(),
        joint: None,
        seed,
    };
    loop {
        match task {
            TaskName::Reach => {
                st.goal = point(&mut rng, (-0.8, 0.8), (-0.5, 0.8));
            }
            TaskName::Push | TaskName::PickPlace => {
                let obj = point(&mut rng, (-0.5, 0.5), (-0.5, 0.2));
                let ang = uniform(&mut rng, 0.0, std::f64::consts::TAU);
                let r = uniform(&mut rng, 0.25, 0.5);
                st.object = Some(obj);
                st.goal = [obj[0] + r * ang.cos(), obj[1] + r * ang.sin()];
            }
            TaskName::ReachWall => {
                let (xc, yw) = (uniform(&mut rng, -0.2, 0.2), uniform(&mut rng, -0.4, -0.1));
                st.obstacles = vec![Segment::new([xc - 0.3, yw], [xc + 0.3, yw])];
                st.goal = point(&mut rng, (xc - 0.35, xc + 0.35), (yw + 0.2, 0.8));
            }
            TaskName::PushWall => {
                let obj = point(&mut rng, (-0.4, 0.4), (-0.5, -0.3));
                let xc = obj[0] + uniform(&mut rng, -0.1, 0.1);
                let yw = obj[1] + 0.2;
                st.obstacles = vec![Segment::new([xc - 0.12, yw], [xc + 0.12, yw])];
                st.object = Some(obj);
                st.goal = [
                    obj[0] + uniform(&mut rng, -0.15, 0.15),
                    obj[1] + uniform(&mut rng, 0.35, 0.5),
                ];
            }
            TaskName::BinPicking => {
                let a = point(&mut rng, (-0.6, -0.3), (-0.4, 0.0));
                let b = point(&mut rng, (0.3, 0.6), (-0.4, 0.0));
                st.obstacles = bin_walls(a);
                st.obstacles.extend(bin_walls(b));
                st.object = Some(a);
                st.goal = b;
            }
            TaskName::ButtonPress => {
                st.goal = point(&mut rng, (-0.7, 0.7), (-0.3, 0.7));
            }
            TaskName::FaucetRotate | TaskName::DoorOpen => {
                let (pivot, radius, sweep) = if task == TaskName::FaucetRotate {
                    (
                        point(&mut rng, (-0.6, 0.6), (-0.3, 0.6)),
                        0.15,
                        std::f64::consts::FRAC_PI_2,
                    )
                } else {
                    (
                        point(&mut rng, (-0.5, 0.5), (-0.2, 0.5)),
                        0.3,
                        std::f64::consts::FRAC_PI_4,
                    )
                };
                let joint = Joint {
                    pivot,
                    radius,
                    start_angle: uniform(&mut rng, 0.0, std::f64::consts::TAU),
                    target_sweep: sweep,
                };
                st.object = Some(joint.tip(joint.start_angle));
                st.goal = joint.tip(joint.start_angle + sweep);
                st.joint = Some(joint);
            }
        }
        let far_from_start = dist(st.goal, START) >= MIN_SEPARATION;
        let inside = in_box(st.goal, 0.9) && st.object.map_or(true, |o| in_box(o, 0.9));
        if far_from_start && inside && st.validate().is_ok() {
            return st;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_tiers() {
        for t in TaskName::ALL {
            assert_eq!(t.as_str().parse::<TaskName>().unwrap(), t);
        }
        assert_eq!(TaskName::Reach.tier(), 1);
        assert_eq!(TaskName::BinPicking.tier(), 2);
        assert_eq!(TaskName::DoorOpen.tier(), 3);
        assert!("pick-place-wall".parse::<TaskName>().is_err());
    }

    #[test]
    fn tier_two_shares_base_mechanics() {
        assert_eq!(TaskName::ReachWall.mechanics(), TaskName::Reach.mechanics());
        assert_eq!(TaskName::PushWall.mechanics(), TaskName::Push.mechanics());
        assert_eq!(TaskName::BinPicking.mechanics(), TaskName::PickPlace.mechanics());
    }

    #[test]
    fn generated_subtasks_respect_invariants() {
        for t in TaskName::ALL {
            for s in 0..200 {
                let st = generate_subtask(t, s);
                st.validate().unwrap();
                assert!(dist(st.goal, START) >= MIN_SEPARATION);
                assert_eq!(st.object.is_some(), !matches!(t, TaskName::Reach | TaskName::ReachWall | TaskName::ButtonPress));
                assert_eq!(st.obstacles.is_empty(), t.tier() != 2);
            }
        }
    }

    #[test]
    fn empty_pool_is_config_error() {
        let mut spec = TaskSpec::new(TaskName::Reach);
        spec.pool_size = 0;
        assert!(matches!(spec.pool(PoolStream::Main), Err(Error::Config(_))));
        assert!(SubTaskPool::from_subtasks(vec![]).is_err());
    }

    #[test]
    fn streams_are_disjoint_and_deterministic() {
        let spec = TaskSpec::new(TaskName::Push);
        let a = spec.pool(PoolStream::MetaTrain).unwrap();
        let b = spec.pool(PoolStream::Main).unwrap();
        assert_eq!(a, spec.pool(PoolStream::MetaTrain).unwrap());
        for x in a.subtasks() {
            assert!(b.subtasks().iter().all(|y| x.goal != y.goal));
        }
    }

    #[test]
    fn wrong_tier_rejected() {
        let mut spec = TaskSpec::new(TaskName::Reach);
        spec.tier = 3;
        assert!(spec.validate().is_err());
    }
}
