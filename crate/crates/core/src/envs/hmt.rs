//! Heterogeneous material transport.
//!
//! Robots start inside the construction site. A robot that enters a depot
//! empty, while that material's quota is still open, loads its full capacity
//! of that material. Entering the construction site loaded delivers the whole
//! load. The episode ends when both quotas are met or the horizon is reached.
//!
//! Rewards, summed over robots into one team reward:
//!
//! | event                                  | reward                |
//! |----------------------------------------|-----------------------|
//! | pickup                                 | +0.25                 |
//! | delivery while that quota was open     | +0.75                 |
//! | delivered amount beyond the quota      | −0.10 per unit        |
//! | each robot, each step with quota open  | −0.005                |

use rand::Rng;
use serde::{Deserialize, Serialize};
use tensorcore::RngStream;

use super::{distance, parse_actions, EnvKind, Environment, Rect, StepInfo, StepResult, TeamSpec};
use crate::error::{Error, Result};

pub const PICKUP_REWARD: f64 = 0.25;
pub const DROPOFF_REWARD: f64 = 0.75;
pub const SURPLUS_PENALTY: f64 = 0.10;
pub const TIME_PENALTY: f64 = 0.005;

/// `[pos(2), vel(2), carried(2), d_lumber, d_concrete, d_site, quota(2), delivered(2)]`
pub const OBS_DIM: usize = 13;

/// Tolerance for comparing accumulated deliveries with integer quotas.
const QUOTA_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Material {
    Lumber = 0,
    Concrete = 1,
}

impl Material {
    pub const BOTH: [Material; 2] = [Material::Lumber, Material::Concrete];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmtConfig {
    pub arena: Rect,
    pub lumber_depot: Rect,
    pub concrete_depot: Rect,
    pub construction_site: Rect,
    pub horizon: usize,
    pub step_size: f64,
    /// Quotas are drawn from the integers in
    /// `[ceil(low · N), floor(high · N)]`.
    pub quota_factors: [f64; 2],
    /// Overrides the random quota with fixed `[lumber, concrete]` values.
    pub fixed_quota: Option<[u32; 2]>,
}

impl Default for HmtConfig {
    fn default() -> Self {
        Self {
            arena: Rect::new(-1.0, 1.0, -1.0, 1.0),
            lumber_depot: Rect::new(-1.0, -0.6, 0.2, 1.0),
            concrete_depot: Rect::new(-1.0, -0.6, -1.0, -0.2),
            construction_site: Rect::new(0.6, 1.0, -0.4, 0.4),
            horizon: 500,
            step_size: 0.05,
            quota_factors: [0.5, 2.0],
            fixed_quota: None,
        }
    }
}

impl HmtConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, r) in [
            ("env.hmt.arena", &self.arena),
            ("env.hmt.lumber_depot", &self.lumber_depot),
            ("env.hmt.concrete_depot", &self.concrete_depot),
            ("env.hmt.construction_site", &self.construction_site),
        ] {
            if !r.is_valid() {
                return Err(Error::config(key, "rectangle needs x_min < x_max and y_min < y_max"));
            }
            if key != "env.hmt.arena" && !self.arena.contains_rect(r) {
                return Err(Error::config(key, "zone must lie inside the arena"));
            }
        }
        if self.horizon == 0 {
            return Err(Error::config("env.hmt.horizon", "must be positive"));
        }
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(Error::config("env.hmt.step_size", "must be positive"));
        }
        let [lo, hi] = self.quota_factors;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::config("env.hmt.quota_factors", "need 0 < low <= high"));
        }
        if let Some(q) = self.fixed_quota {
            if q.contains(&0) {
                return Err(Error::config("env.hmt.fixed_quota", "quotas must be positive"));
            }
        }
        Ok(())
    }

    /// Inclusive integer range of quotas for a team of `n`.
    pub fn quota_range(&self, n: usize) -> (u32, u32) {
        let lo = (self.quota_factors[0] * n as f64).ceil().max(1.0) as u32;
        let hi = (self.quota_factors[1] * n as f64).floor() as u32;
        (lo, hi.max(lo))
    }
}

/// Something that changed the team reward during a step.
#[derive(Clone, Debug, PartialEq)]
pub enum HmtEvent {
    Pickup {
        robot: usize,
        material: Material,
        amount: f64,
    },
    Dropoff {
        robot: usize,
        material: Material,
        amount: f64,
        /// The quota was still open before this delivery.
        rewarded: bool,
        surplus: f64,
    },
    /// Time penalty charged to each of `robots` robots.
    TimePenalty { robots: usize },
}

impl HmtEvent {
    /// Reward contribution of this event, recomputed from its fields.
    pub fn reward(&self) -> f64 {
        match *self {
            HmtEvent::Pickup { .. } => PICKUP_REWARD,
            HmtEvent::Dropoff { rewarded, surplus, .. } => {
                (if rewarded { DROPOFF_REWARD } else { 0.0 }) - SURPLUS_PENALTY * surplus
            }
            HmtEvent::TimePenalty { robots } => -TIME_PENALTY * robots as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmtState {
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    /// `[lumber, concrete]` per robot; at most one entry is non-zero.
    pub carried: Vec<[f64; 2]>,
    pub quota: [f64; 2],
    pub delivered: [f64; 2],
    pub picked_up: [f64; 2],
    pub step: usize,
}

impl HmtState {
    pub fn quota_filled(&self) -> bool {
        Material::BOTH
            .iter()
            .all(|m| self.delivered[m.index()] >= self.quota[m.index()] - QUOTA_EPS)
    }

    fn quota_open(&self, m: Material) -> bool {
        self.quota[m.index()] - self.delivered[m.index()] > QUOTA_EPS
    }
}

pub struct HmtEnv {
    team: TeamSpec,
    config: HmtConfig,
    state: HmtState,
}

impl HmtEnv {
    pub fn new(team: TeamSpec, config: HmtConfig) -> Result<Self> {
        team.validate(EnvKind::Hmt)?;
        config.validate()?;
        let n = team.len();
        let state = HmtState {
            positions: vec![config.construction_site.center(); n],
            velocities: vec![[0.0; 2]; n],
            carried: vec![[0.0; 2]; n],
            quota: [1.0, 1.0],
            delivered: [0.0; 2],
            picked_up: [0.0; 2],
            step: 0,
        };
        Ok(Self { team, config, state })
    }

    pub fn state(&self) -> &HmtState {
        &self.state
    }

    pub fn config(&self) -> &HmtConfig {
        &self.config
    }

    /// Replaces the state, e.g. to set up a scenario in tests.
    pub fn set_state(&mut self, state: HmtState) -> Result<()> {
        if state.positions.len() != self.team.len()
            || state.velocities.len() != self.team.len()
            || state.carried.len() != self.team.len()
        {
            return Err(Error::InvalidTeam("state size does not match the team".into()));
        }
        self.state = state;
        Ok(())
    }

    fn zone(&self, m: Material) -> &Rect {
        match m {
            Material::Lumber => &self.config.lumber_depot,
            Material::Concrete => &self.config.concrete_depot,
        }
    }
}

impl Environment for HmtEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Hmt
    }

    fn team(&self) -> &TeamSpec {
        &self.team
    }

    fn set_team(&mut self, team: TeamSpec) -> Result<()> {
        team.validate(EnvKind::Hmt)?;
        let n = team.len();
        self.team = team;
        self.state.positions = vec![self.config.construction_site.center(); n];
        self.state.velocities = vec![[0.0; 2]; n];
        self.state.carried = vec![[0.0; 2]; n];
        Ok(())
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        let n = self.team.len();
        let quota = match self.config.fixed_quota {
            Some([l, c]) => [f64::from(l), f64::from(c)],
            None => {
                let (lo, hi) = self.config.quota_range(n);
                [f64::from(rng.gen_range(lo..=hi)), f64::from(rng.gen_range(lo..=hi))]
            }
        };
        let site = self.config.construction_site;
        let positions = (0..n)
            .map(|_| {
                [
                    rng.gen_range(site.x_min..=site.x_max),
                    rng.gen_range(site.y_min..=site.y_max),
                ]
            })
            .collect();
        self.state = HmtState {
            positions,
            velocities: vec![[0.0; 2]; n],
            carried: vec![[0.0; 2]; n],
            quota,
            delivered: [0.0; 2],
            picked_up: [0.0; 2],
            step: 0,
        };
        Ok((0..n).map(|i| self.observe(i)).collect())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let n = self.team.len();
        let actions = parse_actions(actions, n)?;
        let arena = self.config.arena;
        let site = self.config.construction_site;
        let step_size = self.config.step_size;
        let mut events = Vec::new();

        for (i, a) in actions.iter().enumerate() {
            let dir = a.direction();
            let p = self.state.positions[i];
            let next = arena.clamp([p[0] + step_size * dir[0], p[1] + step_size * dir[1]]);
            self.state.velocities[i] = [next[0] - p[0], next[1] - p[1]];
            self.state.positions[i] = next;
        }

        for i in 0..n {
            let pos = self.state.positions[i];
            let carried = self.state.carried[i];
            let empty = carried == [0.0, 0.0];
            if empty {
                for m in Material::BOTH {
                    let capacity = self.team.robots[i].capability[m.index()];
                    if capacity > 0.0 && self.zone(m).contains(pos) && self.state.quota_open(m) {
                        self.state.carried[i][m.index()] = capacity;
                        self.state.picked_up[m.index()] += capacity;
                        events.push(HmtEvent::Pickup {
                            robot: i,
                            material: m,
                            amount: capacity,
                        });
                    }
                }
            } else if site.contains(pos) {
                for m in Material::BOTH {
                    let amount = carried[m.index()];
                    if amount == 0.0 {
                        continue;
                    }
                    let remaining = self.state.quota[m.index()] - self.state.delivered[m.index()];
                    let rewarded = remaining > QUOTA_EPS;
                    let surplus = (amount - remaining.max(0.0)).max(0.0);
                    self.state.delivered[m.index()] += amount;
                    self.state.carried[i][m.index()] = 0.0;
                    events.push(HmtEvent::Dropoff {
                        robot: i,
                        material: m,
                        amount,
                        rewarded,
                        surplus,
                    });
                }
            }
        }

        let quota_filled = self.state.quota_filled();
        if !quota_filled {
            events.push(HmtEvent::TimePenalty { robots: n });
        }
        self.state.step += 1;
        let reward = events.iter().map(HmtEvent::reward).sum();
        let done = quota_filled || self.state.step >= self.config.horizon;

        Ok(StepResult {
            observations: (0..n).map(|i| self.observe(i)).collect(),
            reward,
            done,
            info: StepInfo::Hmt {
                events,
                quota: self.state.quota,
                delivered: self.state.delivered,
                quota_filled,
            },
        })
    }

    fn observe(&self, i: usize) -> Vec<f64> {
        let s = &self.state;
        let p = s.positions[i];
        let v = s.velocities[i];
        let c = s.carried[i];
        vec![
            p[0],
            p[1],
            v[0],
            v[1],
            c[0],
            c[1],
            distance(p, self.config.lumber_depot.center()),
            distance(p, self.config.concrete_depot.center()),
            distance(p, self.config.construction_site.center()),
            s.quota[0],
            s.quota[1],
            s.delivered[0],
            s.delivered[1],
        ]
    }
}
