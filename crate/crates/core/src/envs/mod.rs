//! Heterogeneous multi-robot environments.
//!
//! Two tasks share the [`Environment`] interface:
//!
//! * [`hmt`]: material transport. Robots carry lumber and concrete from two
//!   depots to a construction site until both quotas are met.
//! * [`hsn`]: sensor network. Robots with different sensing radii spread out
//!   so their disks touch without overlapping.
//!
//! Both use five discrete actions and a shared team reward. Observations are
//! strictly local: a robot never sees another robot's state.

pub mod geometry;
pub mod hmt;
pub mod hsn;
pub mod safety;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tensorcore::RngStream;

use crate::error::{Error, Result};

pub use geometry::{connectivity_check, lens_area, pairwise_overlap};
pub use hmt::{HmtConfig, HmtEnv, HmtEvent, HmtState, Material};
pub use hsn::{hsn_pair_reward, HsnConfig, HsnEnv, HsnState};
pub use safety::{safety_filter, SafetyParams};

/// Width of the one-hot identifier appended for ID-conditioned policies: the
/// 20 robots of the five four-robot training teams.
pub const ID_DIM: usize = 20;

/// Number of discrete actions per robot.
pub const NUM_ACTIONS: usize = 5;

/// Discrete motion command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
    Stop,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Left, Action::Right, Action::Up, Action::Down, Action::Stop];

    pub fn from_index(robot: usize, action: usize) -> Result<Self> {
        Self::ALL
            .get(action)
            .copied()
            .ok_or(Error::InvalidAction { robot, action })
    }

    /// Unit direction of travel.
    pub fn direction(self) -> [f64; 2] {
        match self {
            Action::Left => [-1.0, 0.0],
            Action::Right => [1.0, 0.0],
            Action::Up => [0.0, 1.0],
            Action::Down => [0.0, -1.0],
            Action::Stop => [0.0, 0.0],
        }
    }
}

pub(crate) fn parse_actions(actions: &[usize], n: usize) -> Result<Vec<Action>> {
    if actions.len() != n {
        return Err(Error::ActionCount {
            expected: n,
            found: actions.len(),
        });
    }
    actions
        .iter()
        .enumerate()
        .map(|(i, &a)| Action::from_index(i, a))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Hmt,
    Hsn,
}

impl EnvKind {
    /// Length of the capability vector.
    pub fn capability_dim(self) -> usize {
        match self {
            EnvKind::Hmt => 2,
            EnvKind::Hsn => 1,
        }
    }

    /// Length of the observation before any capability/ID suffix.
    pub fn base_obs_dim(self) -> usize {
        match self {
            EnvKind::Hmt => hmt::OBS_DIM,
            EnvKind::Hsn => hsn::OBS_DIM,
        }
    }

    /// Tag identifying the observation layout, stored in checkpoints.
    pub fn obs_layout(self) -> &'static str {
        match self {
            EnvKind::Hmt => "hmt-obs-v1",
            EnvKind::Hsn => "hsn-obs-v1",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Hmt => "hmt",
            EnvKind::Hsn => "hsn",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmt" => Ok(EnvKind::Hmt),
            "hsn" => Ok(EnvKind::Hsn),
            other => Err(Error::config("env", format!("unknown environment `{other}`"))),
        }
    }
}

/// One robot: its capability vector and, for robots from the training pool,
/// its identifier.
///
/// HMT capabilities are `[lumber capacity, concrete capacity]`; HSN has a
/// single sensing radius in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub capability: Vec<f64>,
    pub id_index: Option<usize>,
}

impl RobotSpec {
    pub fn new(capability: Vec<f64>, id_index: Option<usize>) -> Self {
        Self { capability, id_index }
    }
}

/// Ordered team. The order is canonical for the centralized critic input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamSpec {
    pub name: String,
    pub robots: Vec<RobotSpec>,
}

pub const MAX_TEAM_SIZE: usize = 32;

impl TeamSpec {
    pub fn new(name: impl Into<String>, robots: Vec<RobotSpec>) -> Self {
        Self {
            name: name.into(),
            robots,
        }
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn capabilities(&self) -> Vec<Vec<f64>> {
        self.robots.iter().map(|r| r.capability.clone()).collect()
    }

    /// Identifiers of every robot, or `None` if any robot lacks one.
    pub fn ids(&self) -> Option<Vec<usize>> {
        self.robots.iter().map(|r| r.id_index).collect()
    }

    /// Checks size and capability ranges for `kind`.
    pub fn validate(&self, kind: EnvKind) -> Result<()> {
        let n = self.robots.len();
        if n == 0 || n > MAX_TEAM_SIZE {
            return Err(Error::InvalidTeam(format!(
                "team `{}` has {n} robots (allowed 1..={MAX_TEAM_SIZE})",
                self.name
            )));
        }
        for (i, r) in self.robots.iter().enumerate() {
            if r.capability.len() != kind.capability_dim() {
                return Err(Error::InvalidTeam(format!(
                    "robot {i} of `{}` has {} capabilities, {kind} needs {}",
                    self.name,
                    r.capability.len(),
                    kind.capability_dim()
                )));
            }
            let ok = match kind {
                EnvKind::Hmt => r.capability.iter().all(|&c| (0.0..=1.0).contains(&c)),
                EnvKind::Hsn => r.capability[0] > 0.0 && r.capability[0] <= 1.0,
            };
            if !ok {
                return Err(Error::InvalidTeam(format!(
                    "robot {i} of `{}` has out-of-range capability {:?}",
                    self.name, r.capability
                )));
            }
            if let Some(id) = r.id_index {
                if id >= ID_DIM {
                    return Err(Error::InvalidTeam(format!(
                        "robot {i} of `{}` has id {id} outside the {ID_DIM}-robot pool",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// What is appended to a robot's observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsSuffix {
    Capability,
    Id,
}

impl ObsSuffix {
    pub fn width(self, kind: EnvKind) -> usize {
        match self {
            ObsSuffix::Capability => kind.capability_dim(),
            ObsSuffix::Id => ID_DIM,
        }
    }
}

/// Builds the suffix vector for `robot`.
pub fn suffix_for(robot: &RobotSpec, suffix: ObsSuffix) -> Result<Vec<f64>> {
    match suffix {
        ObsSuffix::Capability => Ok(robot.capability.clone()),
        ObsSuffix::Id => {
            let id = robot.id_index.ok_or_else(|| Error::UnsupportedVariant {
                variant: "id-conditioned".into(),
                reason: "robot has no training-pool identifier".into(),
            })?;
            let mut v = vec![0.0; ID_DIM];
            v[id] = 1.0;
            Ok(v)
        }
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub enum StepInfo {
    Hmt {
        events: Vec<HmtEvent>,
        quota: [f64; 2],
        delivered: [f64; 2],
        quota_filled: bool,
    },
    Hsn {
        overlap: f64,
        connected: bool,
        min_distance: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// Base observation of every robot (no suffix).
    pub observations: Vec<Vec<f64>>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A task instance bound to one team.
///
/// `step` is deterministic given the state and actions; randomness enters only
/// through `reset`.
pub trait Environment: Send {
    fn kind(&self) -> EnvKind;

    fn team(&self) -> &TeamSpec;

    /// Swaps the team. Takes effect at the next reset.
    fn set_team(&mut self, team: TeamSpec) -> Result<()>;

    fn horizon(&self) -> usize;

    /// Starts a new episode and returns base observations.
    fn reset(&mut self, rng: &mut RngStream) -> Result<Vec<Vec<f64>>>;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    /// Base observation of robot `i`.
    fn observe(&self, i: usize) -> Vec<f64>;

    /// Observation of robot `i` with its capability or ID appended.
    fn observe_with(&self, i: usize, suffix: ObsSuffix) -> Result<Vec<f64>> {
        let mut obs = self.observe(i);
        obs.extend(suffix_for(&self.team().robots[i], suffix)?);
        Ok(obs)
    }
}

/// Constants for both environments, as they appear in the experiment config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSettings {
    pub hmt: HmtConfig,
    pub hsn: HsnConfig,
}

pub fn make_env(kind: EnvKind, team: TeamSpec, settings: &EnvSettings) -> Result<Box<dyn Environment>> {
    Ok(match kind {
        EnvKind::Hmt => Box::new(HmtEnv::new(team, settings.hmt.clone())?),
        EnvKind::Hsn => Box::new(HsnEnv::new(team, settings.hsn.clone())?),
    })
}

/// Axis-aligned rectangle `[x_min, x_max, y_min, y_max]`, boundary inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.x_min, self.x_max), p[1].clamp(self.y_min, self.y_max)]
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)]
    }

    pub fn is_valid(&self) -> bool {
        self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains([other.x_min, other.y_min]) && self.contains([other.x_max, other.y_max])
    }
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Self {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x_min, r.x_max, r.y_min, r.y_max]
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_suffix_is_one_hot() {
        let r = RobotSpec::new(vec![0.3], Some(7));
        let v = suffix_for(&r, ObsSuffix::Id).unwrap();
        assert_eq!(v.len(), ID_DIM);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert_eq!(v[7], 1.0);
        assert!(suffix_for(&RobotSpec::new(vec![0.3], None), ObsSuffix::Id).is_err());
    }

    #[test]
    fn team_validation() {
        let ok = TeamSpec::new("t", vec![RobotSpec::new(vec![0.2, 0.8], None)]);
        assert!(ok.validate(EnvKind::Hmt).is_ok());
        assert!(ok.validate(EnvKind::Hsn).is_err());
        let neg = TeamSpec::new("t", vec![RobotSpec::new(vec![-0.1, 0.8], None)]);
        assert!(neg.validate(EnvKind::Hmt).is_err());
        let zero_radius = TeamSpec::new("t", vec![RobotSpec::new(vec![0.0], None)]);
        assert!(zero_radius.validate(EnvKind::Hsn).is_err());
        assert!(TeamSpec::new("empty", vec![]).validate(EnvKind::Hsn).is_err());
        let big = TeamSpec::new("big", vec![RobotSpec::new(vec![0.3], None); 33]);
        assert!(big.validate(EnvKind::Hsn).is_err());
    }

    #[test]
    fn rect_membership_is_boundary_inclusive() {
        let r = Rect::new(0.6, 1.0, -0.4, 0.4);
        assert!(r.contains([0.6, 0.4]));
        assert!(!r.contains([0.59, 0.0]));
        assert_eq!(r.clamp([2.0, -3.0]), [1.0, -0.4]);
    }
}
