//! Heterogeneous sensor network.
//!
//! Robots with different sensing radii try to form a network whose disks
//! touch but do not overlap. The shared reward sums, over every pair,
//!
//! ```text
//! D(i, j) = ‖p_i − p_j‖ − (c_i + c_j)
//! r(i, j) = −0.9·|D| + 0.05   if D < 0
//!           −1.1·|D| − 0.05   otherwise
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};
use tensorcore::RngStream;

use super::geometry::{connectivity_check, pairwise_overlap};
use super::safety::{safety_filter, SafetyParams};
use super::{distance, parse_actions, EnvKind, Environment, Rect, StepInfo, StepResult, TeamSpec};
use crate::error::{Error, Result};

/// `[pos(2)]`
pub const OBS_DIM: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsnConfig {
    pub arena: Rect,
    pub horizon: usize,
    pub step_size: f64,
    /// Minimum pairwise distance of initial placements.
    pub start_separation: f64,
    pub placement_attempts: usize,
    pub safety: SafetyParams,
}

impl Default for HsnConfig {
    fn default() -> Self {
        Self {
            arena: Rect::new(-1.6, 1.6, -1.0, 1.0),
            horizon: 60,
            step_size: 0.19,
            start_separation: 0.30,
            placement_attempts: 10_000,
            safety: SafetyParams::default(),
        }
    }
}

impl HsnConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.arena.is_valid() {
            return Err(Error::config(
                "env.hsn.arena",
                "rectangle needs x_min < x_max and y_min < y_max",
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("env.hsn.horizon", "must be positive"));
        }
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(Error::config("env.hsn.step_size", "must be positive"));
        }
        if self.safety.min_separation.is_nan() || self.safety.min_separation < 0.0 {
            return Err(Error::config("env.hsn.safety.min_separation", "must be non-negative"));
        }
        if self.start_separation < self.safety.min_separation {
            return Err(Error::config(
                "env.hsn.start_separation",
                "must be at least the safety separation",
            ));
        }
        if self.placement_attempts == 0 {
            return Err(Error::config("env.hsn.placement_attempts", "must be positive"));
        }
        Ok(())
    }
}

/// Reward for one pair of robots.
pub fn hsn_pair_reward(pi: [f64; 2], pj: [f64; 2], ci: f64, cj: f64) -> f64 {
    let d = distance(pi, pj) - (ci + cj);
    if d < 0.0 {
        -0.9 * d.abs() + 0.05
    } else {
        -1.1 * d.abs() - 0.05
    }
}

/// Sum of [`hsn_pair_reward`] over all pairs `i < j`.
pub fn hsn_team_reward(positions: &[[f64; 2]], radii: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            total += hsn_pair_reward(positions[i], positions[j], radii[i], radii[j]);
        }
    }
    total
}

fn min_pairwise_distance(positions: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            best = best.min(distance(positions[i], positions[j]));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct HsnState {
    pub positions: Vec<[f64; 2]>,
    pub step: usize,
}

pub struct HsnEnv {
    team: TeamSpec,
    radii: Vec<f64>,
    config: HsnConfig,
    state: HsnState,
}

impl HsnEnv {
    pub fn new(team: TeamSpec, config: HsnConfig) -> Result<Self> {
        team.validate(EnvKind::Hsn)?;
        config.validate()?;
        let n = team.len();
        let radii = team.robots.iter().map(|r| r.capability[0]).collect();
        Ok(Self {
            team,
            radii,
            state: HsnState {
                positions: vec![config.arena.center(); n],
                step: 0,
            },
            config,
        })
    }

    pub fn state(&self) -> &HsnState {
        &self.state
    }

    pub fn config(&self) -> &HsnConfig {
        &self.config
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Replaces the state, e.g. to set up a scenario in tests.
    pub fn set_state(&mut self, state: HsnState) -> Result<()> {
        if state.positions.len() != self.team.len() {
            return Err(Error::InvalidTeam("state size does not match the team".into()));
        }
        self.state = state;
        Ok(())
    }

    fn info(&self) -> StepInfo {
        let p = &self.state.positions;
        StepInfo::Hsn {
            overlap: pairwise_overlap(p, &self.radii),
            connected: connectivity_check(p, &self.radii),
            min_distance: min_pairwise_distance(p),
        }
    }
}

impl Environment for HsnEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Hsn
    }

    fn team(&self) -> &TeamSpec {
        &self.team
    }

    fn set_team(&mut self, team: TeamSpec) -> Result<()> {
        team.validate(EnvKind::Hsn)?;
        self.radii = team.robots.iter().map(|r| r.capability[0]).collect();
        self.state.positions = vec![self.config.arena.center(); team.len()];
        self.team = team;
        Ok(())
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        let n = self.team.len();
        let a = self.config.arena;
        let sep = self.config.start_separation;
        for _ in 0..self.config.placement_attempts {
            let positions: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.gen_range(a.x_min..=a.x_max), rng.gen_range(a.y_min..=a.y_max)])
                .collect();
            if min_pairwise_distance(&positions) >= sep {
                self.state = HsnState { positions, step: 0 };
                return Ok((0..n).map(|i| self.observe(i)).collect());
            }
        }
        Err(Error::Placement {
            robots: n,
            separation: sep,
            attempts: self.config.placement_attempts,
        })
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let n = self.team.len();
        let actions = parse_actions(actions, n)?;
        let arena = self.config.arena;
        let positions = &self.state.positions;
        let proposed: Vec<[f64; 2]> = actions
            .iter()
            .zip(positions)
            .map(|(a, p)| {
                let dir = a.direction();
                let s = self.config.step_size;
                let target = arena.clamp([p[0] + s * dir[0], p[1] + s * dir[1]]);
                [target[0] - p[0], target[1] - p[1]]
            })
            .collect();
        let disp = safety_filter(positions, &proposed, &self.config.safety);
        let next: Vec<[f64; 2]> = positions
            .iter()
            .zip(&disp)
            .map(|(p, d)| arena.clamp([p[0] + d[0], p[1] + d[1]]))
            .collect();
        self.state.positions = next;
        self.state.step += 1;

        let reward = hsn_team_reward(&self.state.positions, &self.radii);
        Ok(StepResult {
            observations: (0..n).map(|i| self.observe(i)).collect(),
            reward,
            done: self.state.step >= self.config.horizon,
            info: self.info(),
        })
    }

    fn observe(&self, i: usize) -> Vec<f64> {
        self.state.positions[i].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ObsSuffix, RobotSpec};

    fn team(radii: &[f64]) -> TeamSpec {
        TeamSpec::new(
            "t",
            radii
                .iter()
                .enumerate()
                .map(|(i, &r)| RobotSpec::new(vec![r], Some(i)))
                .collect(),
        )
    }

    #[test]
    fn pair_reward_cases() {
        assert_eq!(hsn_pair_reward([0.0, 0.0], [1.0, 0.0], 0.4, 0.6), -0.05);
        assert!((hsn_pair_reward([0.0, 0.0], [0.5, 0.0], 0.3, 0.3) + 0.04).abs() < 1e-12);
        assert!((hsn_pair_reward([0.0, 0.0], [2.0, 0.0], 0.3, 0.3) + 1.59).abs() < 1e-12);
    }

    #[test]
    fn single_robot_has_zero_reward() {
        let mut env = HsnEnv::new(team(&[0.4]), HsnConfig::default()).unwrap();
        env.reset(&mut RngStream::from_seed(1)).unwrap();
        assert_eq!(env.step(&[0]).unwrap().reward, 0.0);
    }

    #[test]
    fn three_robots_sum_three_pairs() {
        let mut env = HsnEnv::new(team(&[0.2, 0.3, 0.4]), HsnConfig::default()).unwrap();
        let p = vec![[-1.0, 0.0], [0.0, 0.0], [1.0, 0.5]];
        env.set_state(HsnState {
            positions: p.clone(),
            step: 0,
        })
        .unwrap();
        let r = env.step(&[4, 4, 4]).unwrap().reward;
        let want = hsn_pair_reward(p[0], p[1], 0.2, 0.3)
            + hsn_pair_reward(p[0], p[2], 0.2, 0.4)
            + hsn_pair_reward(p[1], p[2], 0.3, 0.4);
        assert_eq!(r, want);
    }

    #[test]
    fn placement_respects_separation_and_seed() {
        let mut a = HsnEnv::new(team(&[0.3, 0.5]), HsnConfig::default()).unwrap();
        let mut b = HsnEnv::new(team(&[0.3, 0.5]), HsnConfig::default()).unwrap();
        for seed in 0..50 {
            a.reset(&mut RngStream::from_seed(seed)).unwrap();
            b.reset(&mut RngStream::from_seed(seed)).unwrap();
            assert_eq!(a.state(), b.state());
            let p = &a.state().positions;
            assert!(distance(p[0], p[1]) >= 0.30);
        }
    }

    #[test]
    fn overcrowded_team_fails_placement() {
        let cfg = HsnConfig {
            start_separation: 1.5,
            ..HsnConfig::default()
        };
        let mut env = HsnEnv::new(team(&[0.3; 6]), cfg).unwrap();
        let err = env.reset(&mut RngStream::from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::Placement { robots: 6, .. }));
    }

    #[test]
    fn motion_stays_in_arena_and_ends_at_horizon() {
        let mut env = HsnEnv::new(team(&[0.3]), HsnConfig::default()).unwrap();
        env.set_state(HsnState {
            positions: vec![[1.5, 0.0]],
            step: 0,
        })
        .unwrap();
        let r = env.step(&[1]).unwrap();
        assert_eq!(env.state().positions[0], [1.6, 0.0]);
        assert!(!r.done);
        for _ in 1..59 {
            assert!(!env.step(&[4]).unwrap().done);
        }
        assert!(env.step(&[4]).unwrap().done);
    }

    #[test]
    fn observation_is_position_plus_suffix() {
        let mut env = HsnEnv::new(team(&[0.3, 0.5]), HsnConfig::default()).unwrap();
        env.set_state(HsnState {
            positions: vec![[0.1, 0.2], [0.5, 0.6]],
            step: 0,
        })
        .unwrap();
        assert_eq!(env.observe_with(1, ObsSuffix::Capability).unwrap(), vec![0.5, 0.6, 0.5]);
        assert_eq!(env.observe_with(0, ObsSuffix::Id).unwrap().len(), OBS_DIM + 20);
    }
}
