//! Zero-shot evaluation: team samplers, greedy rollouts and task metrics.

mod run;
mod sample;

use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tensorcore::RngStream;

use crate::envs::{EnvKind, TeamSpec};
use crate::error::{Error, Result};
use crate::training::{make_training_teams, training_pool};

pub use run::evaluate;
pub use sample::{bin_and_build_hsn_pool, sample_composition_teams, sample_new_robot_teams, HSN_BINS};

pub const EVAL_CSV_HEADER: &str =
    "team_idx,episode,return,steps,quota_filled,pct_lumber_rem,pct_concrete_rem,overlap,connected_end";

/// Which robots the evaluation teams are made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalAxis {
    /// The fixed training teams.
    Train,
    /// New combinations of training robots.
    Composition,
    /// Robots with freshly sampled capabilities and no ids.
    NewRobots,
}

impl EvalAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalAxis::Train => "train",
            EvalAxis::Composition => "composition",
            EvalAxis::NewRobots => "new-robots",
        }
    }
}

impl fmt::Display for EvalAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(EvalAxis::Train),
            "composition" => Ok(EvalAxis::Composition),
            "new-robots" => Ok(EvalAxis::NewRobots),
            other => Err(Error::config("eval.axis", format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    pub axis: EvalAxis,
    pub team_sizes: Vec<usize>,
    pub teams_per_setting: usize,
    pub episodes_per_team: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            axis: EvalAxis::Composition,
            team_sizes: vec![3, 4, 5],
            teams_per_setting: 100,
            episodes_per_team: 10,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.team_sizes.is_empty() || self.team_sizes.contains(&0) {
            return Err(Error::config(
                "eval.team_sizes",
                "must be a non-empty list of positive sizes",
            ));
        }
        if self.teams_per_setting == 0 {
            return Err(Error::config("eval.teams_per_setting", "must be positive"));
        }
        if self.episodes_per_team == 0 {
            return Err(Error::config("eval.episodes_per_team", "must be positive"));
        }
        Ok(())
    }
}

/// Evaluation teams for one setting. Sampling draws from
/// `rng.split_indexed("teams", size)`, so every variant evaluated with the
/// same seed sees the same teams. The training axis ignores `size` and
/// `count`.
pub fn teams_for(kind: EnvKind, axis: EvalAxis, size: usize, count: usize, rng: &RngStream) -> Result<Vec<TeamSpec>> {
    let mut rng = rng.split_indexed("teams", size as u64);
    match axis {
        EvalAxis::Train => Ok(make_training_teams(kind)),
        EvalAxis::Composition => sample_composition_teams(&training_pool(kind), size, count, &mut rng),
        EvalAxis::NewRobots => sample_new_robot_teams(kind, size, count, &mut rng),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// One evaluation episode. Columns that do not apply to the environment are
/// `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub team_idx: usize,
    pub episode: usize,
    pub episode_return: f64,
    /// Steps until the quota was filled, or the horizon.
    pub steps: usize,
    pub quota_filled: Option<bool>,
    pub pct_lumber_remaining: Option<f64>,
    pub pct_concrete_remaining: Option<f64>,
    /// Mean pairwise sensing overlap over the episode's steps.
    pub overlap: Option<f64>,
    pub connected_end: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub env: EnvKind,
    pub episodes: usize,
    pub avg_return: MeanStd,
    pub avg_steps: Option<MeanStd>,
    /// Entry `t` is the % of episodes whose quota was filled by step `t + 1`.
    pub pct_quota_filled_by_step: Option<Vec<f64>>,
    pub pct_lumber_remaining: Option<MeanStd>,
    pub pct_concrete_remaining: Option<MeanStd>,
    pub pairwise_overlap: Option<MeanStd>,
    /// Entry `t` is the % of episodes whose team was connected after step
    /// `t + 1`.
    pub pct_fully_connected_by_step: Option<Vec<f64>>,
    pub pct_connected_end: Option<f64>,
    #[serde(skip)]
    pub records: Vec<EpisodeMetrics>,
}

fn pct(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

impl MetricsReport {
    pub(crate) fn aggregate(env: EnvKind, horizon: usize, traces: &[run::EpisodeTrace]) -> Self {
        let n = traces.len();
        let records: Vec<EpisodeMetrics> = traces.iter().map(|t| t.metrics.clone()).collect();
        let col = |f: &dyn Fn(&EpisodeMetrics) -> Option<f64>| -> Vec<f64> { records.iter().filter_map(f).collect() };
        let mut report = MetricsReport {
            env,
            episodes: n,
            avg_return: MeanStd::of(&col(&|m| Some(m.episode_return))),
            avg_steps: None,
            pct_quota_filled_by_step: None,
            pct_lumber_remaining: None,
            pct_concrete_remaining: None,
            pairwise_overlap: None,
            pct_fully_connected_by_step: None,
            pct_connected_end: None,
            records: Vec::new(),
        };
        match env {
            EnvKind::Hmt => {
                report.avg_steps = Some(MeanStd::of(&col(&|m| Some(m.steps as f64))));
                report.pct_quota_filled_by_step = Some(
                    (1..=horizon)
                        .map(|t| pct(traces.iter().filter(|e| e.filled_at.is_some_and(|s| s <= t)).count(), n))
                        .collect(),
                );
                report.pct_lumber_remaining = Some(MeanStd::of(&col(&|m| m.pct_lumber_remaining)));
                report.pct_concrete_remaining = Some(MeanStd::of(&col(&|m| m.pct_concrete_remaining)));
            }
            EnvKind::Hsn => {
                report.pairwise_overlap = Some(MeanStd::of(&col(&|m| m.overlap)));
                report.pct_fully_connected_by_step = Some(
                    (0..horizon)
                        .map(|t| pct(traces.iter().filter(|e| e.connected.get(t) == Some(&true)).count(), n))
                        .collect(),
                );
                report.pct_connected_end =
                    Some(pct(records.iter().filter(|m| m.connected_end == Some(true)).count(), n));
            }
        }
        report.records = records;
        report
    }

    /// Share of episodes that filled the quota (HMT).
    pub fn quota_filled_rate(&self) -> Option<f64> {
        self.pct_quota_filled_by_step.as_ref().and_then(|c| c.last().copied())
    }

    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut s = format!("{EVAL_CSV_HEADER}\n");
        for m in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                m.team_idx,
                m.episode,
                m.episode_return,
                m.steps,
                opt(m.quota_filled),
                opt(m.pct_lumber_remaining),
                opt(m.pct_concrete_remaining),
                opt(m.overlap),
                opt(m.connected_end)
            );
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
